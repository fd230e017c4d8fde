#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <stdexcept>

#include "rsteg/bytes.hpp"

namespace rsteg {

using Digest = std::array<std::uint8_t, 32>;

// One-shot SHA-256 over a reused per-thread context; allocation-free after the
// first call, which matters because the receive path hashes every segment.
inline Digest sha256(const std::uint8_t* data, std::size_t len) {
    thread_local EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    static const EVP_MD* md = EVP_sha256();
    Digest out;
    unsigned int out_len = 0;
    if (!ctx ||
        EVP_DigestInit_ex(ctx, md, nullptr) != 1 ||
        EVP_DigestUpdate(ctx, data, len) != 1 ||
        EVP_DigestFinal_ex(ctx, out.data(), &out_len) != 1 || out_len != 32)
        throw std::runtime_error("sha256 failed");
    return out;
}

inline Digest sha256(const Bytes& data) { return sha256(data.data(), data.size()); }

} // namespace rsteg
