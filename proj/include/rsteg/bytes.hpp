#pragma once

#include <cstdint>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsteg {

using Bytes = std::vector<std::uint8_t>;
// Payloads travel through queues, taps and retransmission buffers; sharing one
// immutable buffer keeps the hot path free of kilobyte copies.
using PayloadPtr = std::shared_ptr<const Bytes>;

inline PayloadPtr make_payload(Bytes b) {
    return std::make_shared<const Bytes>(std::move(b));
}

// Bit addressing is MSB-first: bit i lives in byte i/8 under mask 0x80 >> (i%8).
inline bool get_bit(const Bytes& buf, std::size_t i) {
    return (buf[i >> 3] >> (7 - (i & 7))) & 1u;
}

inline void set_bit(Bytes& buf, std::size_t i, bool v) {
    std::uint8_t mask = static_cast<std::uint8_t>(0x80u >> (i & 7));
    if (v) buf[i >> 3] |= mask; else buf[i >> 3] &= static_cast<std::uint8_t>(~mask);
}

inline void put_be32(Bytes& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_be16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline std::string to_hex(const Bytes& b) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(b.size() * 2);
    for (std::uint8_t c : b) {
        s.push_back(digits[c >> 4]);
        s.push_back(digits[c & 0xf]);
    }
    return s;
}

inline Bytes from_hex(const std::string& s) {
    if (s.size() % 2 != 0) throw std::invalid_argument("hex string has odd length");
    auto nib = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw std::invalid_argument(std::string("bad hex digit: ") + c);
    };
    Bytes out;
    out.reserve(s.size() / 2);
    for (std::size_t i = 0; i < s.size(); i += 2)
        out.push_back(static_cast<std::uint8_t>((nib(s[i]) << 4) | nib(s[i + 1])));
    return out;
}

// splitmix64: tiny, well-known mixer. Used to derive independent substream
// seeds from one master seed and to generate deterministic byte patterns.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t v) {
    std::uint64_t s = v;
    return splitmix64(s);
}

// Deterministic RNG with platform-stable output. std::mt19937_64 is fully
// specified by the standard; the distribution helpers below avoid
// std::uniform_*_distribution, whose output may differ across libraries.
class DetRng {
public:
    explicit DetRng(std::uint64_t seed) : s_(seed ? seed : 0x6a09e667f3bcc908ull) {}

    std::uint64_t next_u64() { return splitmix64(s_); }

    // Uniform in [0, 1).
    double next_u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [0, n) via 128-bit multiply; unbiased enough for simulation
    // plumbing and, more importantly, identical on every platform.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    bool bernoulli(double p) { return next_u01() < p; }

private:
    std::uint64_t s_;
};

// Substream tags keep independent random consumers decoupled: drawing for one
// purpose never perturbs another, which preserves trace identity when a
// feature is switched off.
enum class RngStream : std::uint64_t {
    UdpJitter  = 0x75647000,
    Corruption = 0x636f7200,
    StegMark   = 0x6d726b00,
    StegBits   = 0x62697400,
};

inline std::uint64_t substream_seed(std::uint64_t master_seed, RngStream tag) {
    return mix64(master_seed ^ static_cast<std::uint64_t>(tag));
}

inline DetRng substream(std::uint64_t master_seed, RngStream tag) {
    return DetRng(substream_seed(master_seed, tag));
}

// Application byte stream: position-addressed so any slice can be regenerated
// for verification. Block i of 8 bytes is splitmix64(i) in big-endian order.
inline std::uint8_t app_byte_at(std::uint64_t offset) {
    std::uint64_t block = mix64(offset >> 3);
    return static_cast<std::uint8_t>(block >> (8 * (7 - (offset & 7))));
}

inline Bytes app_bytes(std::uint64_t offset, std::size_t len) {
    Bytes out(len);
    for (std::size_t i = 0; i < len; ++i) out[i] = app_byte_at(offset + i);
    return out;
}

} // namespace rsteg
