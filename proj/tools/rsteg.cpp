#include <iostream>

#include "rsteg/cli.hpp"

int main(int argc, char** argv) {
    return rsteg::run_cli(argc, argv, std::cout, std::cerr);
}
