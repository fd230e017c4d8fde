#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rsteg/cli.hpp"
#include "rsteg/config.hpp"

using namespace rsteg;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    REQUIRE(out.good());
    out << content;
}

struct CliResult {
    int status = -1;
    std::string out;
    std::string err;
};

CliResult cli(std::initializer_list<const char*> args) {
    std::vector<const char*> argv{"rsteg"};
    argv.insert(argv.end(), args.begin(), args.end());
    std::ostringstream out, err;
    CliResult r;
    r.status = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

} // namespace

TEST_CASE("config parser round-trips every documented key", "[config]") {
    std::istringstream in(
        "# topology\n"
        "bottleneck_bandwidth = 2500000\n"
        "access_bandwidth=12000000\n"
        "link_delay_us=2000\n"
        "queue_capacity=5\n"
        "udp_rate=900000\n"
        "udp_packet_size=500\n"
        "p_corrupt=0.0009\n"
        "warden=observe\n"
        "warden_digest_only=true\n"
        "seed=77\n"
        "mechanism=sack   # lower case accepted\n"
        "mss=800\n"
        "rwnd=48000\n"
        "ir_p=0.02\n"
        "scenario=3\n"
        "sk=deadbeefcafe\n"
        "embed_len=64\n"
        "tcp_pace_segments_per_s=200\n"
        "\n"
        "# experiment\n"
        "nr_p_targets=0.03,0.05\n"
        "mechanisms=RTO, FRR ,SACK\n"
        "ir_ps=0.005,0.01\n"
        "seeds=1,2,3\n"
        "warmup_us=1000000\n"
        "measure_us=15000000\n"
        "calibration_tolerance=0.004\n");
    std::set<std::string> seen;
    ExperimentConfig ec = parse_config(in, &seen);
    CHECK(ec.base.bottleneck_bandwidth == 2'500'000);
    CHECK(ec.base.access_bandwidth == 12'000'000);
    CHECK(ec.base.link_delay_us == 2'000);
    CHECK(ec.base.queue_capacity == 5);
    CHECK(ec.base.udp_rate == 900'000);
    CHECK(ec.base.udp_packet_size == 500);
    CHECK(ec.base.p_corrupt == 0.0009);
    CHECK(ec.base.warden == WardenMode::Observe);
    CHECK(ec.base.warden_digest_only);
    CHECK(ec.base.seed == 77);
    CHECK(ec.base.mechanism == Mechanism::Sack);
    CHECK(ec.base.mss == 800);
    CHECK(ec.base.rwnd == 48'000);
    CHECK(ec.base.ir_p == 0.02);
    CHECK(ec.base.scenario == 3);
    CHECK(to_hex(ec.base.sk) == "deadbeefcafe");
    CHECK(ec.base.embed_len == 64);
    CHECK(ec.base.tcp_pace_segments_per_s == 200);
    CHECK(ec.nr_p_targets == std::vector<double>{0.03, 0.05});
    CHECK(ec.mechanisms ==
          std::vector<Mechanism>{Mechanism::RtoOnly, Mechanism::Frr, Mechanism::Sack});
    CHECK(ec.ir_ps == std::vector<double>{0.005, 0.01});
    CHECK(ec.seeds == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(ec.warmup_us == 1'000'000);
    CHECK(ec.measure_us == 15'000'000);
    CHECK(ec.calibration_tolerance == 0.004);
    CHECK(seen.count("seed") == 1);
    CHECK(seen.count("bottleneck_bandwidth") == 1);
}

TEST_CASE("config parser rejects bad input with precise messages", "[config]") {
    auto parse = [](const std::string& text) {
        std::istringstream in(text);
        return parse_config(in);
    };
    CHECK_THROWS_MATCHES(parse("no_such_key=1\n"), ConfigError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("unknown key") &&
                             Catch::Matchers::ContainsSubstring("no_such_key")));
    CHECK_THROWS_MATCHES(parse("seed=1\nseed=2\n"), ConfigError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("duplicate key")));
    CHECK_THROWS_MATCHES(parse("just a line\n"), ConfigError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("key=value")));
    CHECK_THROWS_MATCHES(parse("ir_p=1.5\n"), ConfigError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("fractions in [0,1]")));
    CHECK_THROWS_MATCHES(parse("queue_capacity=abc\n"), ConfigError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("queue_capacity")));
    CHECK_THROWS_MATCHES(parse("mechanism=tahoe\n"), ConfigError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("RTO, FRR, or SACK")));
    // validate() failures surface as config errors too
    CHECK_THROWS_AS(parse("rwnd=100\nmss=1000\n"), ConfigError);
}

TEST_CASE("trace replay drives the warden like the live tap", "[config]") {
    // Two firsts, one identical retransmission, one differing retransmission,
    // then an ack that evicts the first entry.
    std::istringstream trace(
        "T=100 K=SND seq=1 len=1000 retx=0 cause=NONE carrier=0 req=0\n"
        "T=110 K=TAPD seq=1 len=1000 dig=0011223344556677 carrier=0 req=0 corr=0 verdict=P\n"
        "T=120 K=TAPD seq=1001 len=1000 dig=8899aabbccddeeff carrier=0 req=0 corr=0 verdict=P\n"
        "T=200 K=TAPD seq=1 len=1000 dig=0011223344556677 carrier=0 req=0 corr=0 verdict=P\n"
        "T=300 K=TAPD seq=1001 len=1000 dig=ffffffffffffffff carrier=1 req=0 corr=0 verdict=D\n"
        "T=400 K=TAPA ack=1001\n"
        "T=500 K=RTO\n");
    Warden w;
    ReplayStats stats = replay_trace(trace, w);
    CHECK(stats.data_lines == 4);
    CHECK(stats.ack_lines == 1);
    CHECK(stats.ignored_lines == 2);
    const auto& r = w.report();
    CHECK(r.observed_data == 4);
    CHECK(r.observed_acks == 1);
    CHECK(r.retrans_seen == 2);
    CHECK(r.detections == 1);
    CHECK(r.true_positives == 1);
    CHECK(r.false_positives == 0);
    CHECK(r.evictions == 1);

    std::istringstream bad("T=1 K=TAPD seq=1 len=1000 carrier=0\n");
    Warden w2;
    CHECK_THROWS_MATCHES(replay_trace(bad, w2), ConfigError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("missing field 'dig'")));
}

TEST_CASE("run is deterministic for a fixed seed and honors overrides", "[cli]") {
    std::string cfg = temp_path("rsteg_cli_run.cfg");
    write_file(cfg,
               "bottleneck_bandwidth=2000000\n"
               "queue_capacity=5\n"
               "link_delay_us=2000\n"
               "warmup_us=1000000\n"
               "measure_us=8000000\n"
               "ir_p=0.01\n");
    auto a = cli({"run", "--config", cfg.c_str(), "--seed", "42"});
    auto b = cli({"run", "--config", cfg.c_str(), "--seed", "42"});
    REQUIRE(a.status == 0);
    CHECK(a.err.empty());
    CHECK(a.out == b.out);
    CHECK(a.out.find("seed=42\n") == 0);
    CHECK(a.out.find("mechanism=FRR\n") != std::string::npos);
    CHECK(a.out.find("s_b_bps=") != std::string::npos);
    CHECK(a.out.find("stream_intact=1") != std::string::npos);

    auto c = cli({"run", "--config", cfg.c_str(), "--seed", "42", "--mechanism", "SACK"});
    REQUIRE(c.status == 0);
    CHECK(c.out.find("mechanism=SACK\n") != std::string::npos);
    CHECK(c.out != a.out);
}

TEST_CASE("omitted seed is chosen randomly and printed for replay", "[cli]") {
    std::string cfg = temp_path("rsteg_cli_seedless.cfg");
    write_file(cfg,
               "bottleneck_bandwidth=2000000\n"
               "queue_capacity=5\n"
               "link_delay_us=2000\n"
               "warmup_us=500000\n"
               "measure_us=3000000\n");
    auto a = cli({"run", "--config", cfg.c_str()});
    auto b = cli({"run", "--config", cfg.c_str()});
    REQUIRE(a.status == 0);
    REQUIRE(b.status == 0);
    REQUIRE(a.out.rfind("seed=", 0) == 0);
    std::string seed_a = a.out.substr(5, a.out.find('\n') - 5);
    std::string seed_b = b.out.substr(5, b.out.find('\n') - 5);
    CHECK(seed_a != seed_b);

    // Replaying the printed seed reproduces the run byte for byte.
    auto c = cli({"run", "--config", cfg.c_str(), "--seed", seed_a.c_str()});
    REQUIRE(c.status == 0);
    CHECK(c.out == a.out);
}

TEST_CASE("out-of-range fraction flags exit 2 with units in the message", "[cli]") {
    auto r = cli({"run", "--ir-p", "1.5"});
    CHECK(r.status == 2);
    CHECK(r.out.empty());
    CHECK(r.err.find("error: ") == 0);
    CHECK(r.err.find("fractions in [0,1]") != std::string::npos);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
}

TEST_CASE("config problems and usage errors exit 2", "[cli]") {
    auto no_sub = cli({});
    CHECK(no_sub.status == 2);
    CHECK(no_sub.err.find("error: ") == 0);

    auto bad_flag = cli({"run", "--bogus"});
    CHECK(bad_flag.status == 2);

    auto missing_cfg = cli({"run", "--config", "/nonexistent/rsteg.cfg"});
    CHECK(missing_cfg.status == 2);
    CHECK(missing_cfg.err.find("cannot open config file") != std::string::npos);

    std::string cfg = temp_path("rsteg_cli_bad.cfg");
    write_file(cfg, "mystery_knob=7\n");
    auto unknown = cli({"run", "--config", cfg.c_str()});
    CHECK(unknown.status == 2);
    CHECK(unknown.err.find("unknown key") != std::string::npos);
}

TEST_CASE("calibrate prints one line per mechanism and target", "[cli]") {
    std::string cfg = temp_path("rsteg_cli_cal.cfg");
    write_file(cfg,
               "queue_capacity=5\n"
               "link_delay_us=2000\n"
               "warmup_us=2000000\n"
               "measure_us=20000000\n"
               "seeds=1\n"
               "mechanisms=FRR\n"
               "nr_p_targets=0.05\n"
               "calibration_tolerance=0.012\n");
    auto r = cli({"calibrate", "--config", cfg.c_str()});
    INFO(r.err);
    REQUIRE(r.status == 0);
    CHECK(r.out.rfind("mechanism=FRR target=0.05 x_bps=", 0) == 0);
    CHECK(r.out.find("achieved_nr_p=") != std::string::npos);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 1);
}

TEST_CASE("sweep writes a byte-stable csv to --out", "[cli]") {
    std::string cfg = temp_path("rsteg_cli_sweep.cfg");
    write_file(cfg,
               "queue_capacity=5\n"
               "link_delay_us=2000\n"
               "warmup_us=2000000\n"
               "measure_us=20000000\n"
               "seeds=1,2\n"
               "mechanisms=FRR\n"
               "nr_p_targets=0.05\n"
               "ir_ps=0.02\n"
               "calibration_tolerance=0.012\n");
    std::string out1 = temp_path("rsteg_sweep_a.csv");
    std::string out2 = temp_path("rsteg_sweep_b.csv");
    auto a = cli({"sweep", "--config", cfg.c_str(), "--out", out1.c_str()});
    INFO(a.err);
    REQUIRE(a.status == 0);
    auto b = cli({"sweep", "--config", cfg.c_str(), "--out", out2.c_str()});
    REQUIRE(b.status == 0);
    std::ifstream f1(out1), f2(out2);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    std::string csv1 = s1.str();
    std::string csv2 = s2.str();
    CHECK(csv1 == csv2);
    CHECK(csv1.rfind("nr_p_target,mechanism,ir_p,", 0) == 0);
    CHECK(std::count(csv1.begin(), csv1.end(), '\n') == 2); // header + 1 row
    CHECK(csv1.find("0.05,FRR,0.02,") != std::string::npos);
}

TEST_CASE("warden-analyze reproduces the live warden verdicts from a trace", "[cli]") {
    std::string cfg = temp_path("rsteg_cli_wa.cfg");
    write_file(cfg,
               "bottleneck_bandwidth=2000000\n"
               "queue_capacity=5\n"
               "link_delay_us=2000\n"
               "warmup_us=1000000\n"
               "measure_us=15000000\n"
               "ir_p=0.02\n"
               "warden=observe\n"
               "seed=9\n");
    std::string trace = temp_path("rsteg_cli_wa.trace");
    auto run = cli({"run", "--config", cfg.c_str(), "--out", trace.c_str()});
    INFO(run.err);
    REQUIRE(run.status == 0);
    REQUIRE(run.out.find("warden_detections=") != std::string::npos);

    auto wa = cli({"warden-analyze", trace.c_str()});
    INFO(wa.err);
    REQUIRE(wa.status == 0);

    // The live run and the offline replay agree on every warden counter.
    auto field = [](const std::string& text, const std::string& key) {
        std::size_t at = text.find(key + "=");
        REQUIRE(at != std::string::npos);
        std::size_t start = at + key.size() + 1;
        return text.substr(start, text.find('\n', start) - start);
    };
    for (const char* key : {"warden_detections", "warden_retrans_seen",
                            "warden_true_positives", "warden_false_positives"})
        CHECK(field(wa.out, key) == field(run.out, key));
    CHECK(field(wa.out, "warden_detections") != "0");
    CHECK(wa.out.find("conn,rate,flagged\n") != std::string::npos);

    auto missing = cli({"warden-analyze", "/nonexistent/file.trace"});
    CHECK(missing.status == 2);
}
