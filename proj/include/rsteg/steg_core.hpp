#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "rsteg/bytes.hpp"
#include "rsteg/sha256.hpp"

namespace rsteg {

// Control bit distinguishing the two kinds of marked segments: a request mark
// rides on a first transmission and announces that the retransmission will
// carry a steganogram; a steg mark rides on the carrier retransmission itself.
enum class ControlBit : std::uint8_t { RequestMark = 0x00, StegMark = 0x01 };

using StegKey = Bytes;
using Schedule = std::vector<std::uint32_t>;

struct ScheduleError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Identifying sequence: H(SK || seq(4B BE) || masked_checksum(2B BE) || cb(1B)).
// The checksum input must be the masked checksum (scheduled bits zeroed), or
// embedding would change the value it depends on.
inline Digest compute_is(const StegKey& sk, std::uint32_t seq,
                         std::uint16_t masked_checksum, ControlBit cb) {
    thread_local Bytes buf;
    buf.clear();
    buf.insert(buf.end(), sk.begin(), sk.end());
    put_be32(buf, seq);
    put_be16(buf, masked_checksum);
    buf.push_back(static_cast<std::uint8_t>(cb));
    return sha256(buf);
}

// First `embed_len` entries of a keyed permutation of [0, payload_len_bits),
// via sparse Fisher-Yates: only displaced slots are materialized, so cost is
// O(embed_len) regardless of payload size. The stream is keyed by hashing
// (sk, seq) once and expanding with splitmix64; it depends on neither payload
// content nor control bit, so both mark flavors share one schedule.
inline void position_schedule_into(Schedule& out, const StegKey& sk,
                                   std::uint32_t seq, std::uint32_t payload_len_bits,
                                   std::uint32_t embed_len) {
    if (embed_len > payload_len_bits)
        throw ScheduleError("embed_len exceeds payload bit length");
    thread_local Bytes seed_input;
    seed_input.clear();
    seed_input.insert(seed_input.end(), sk.begin(), sk.end());
    put_be32(seed_input, seq);
    seed_input.push_back('s');
    seed_input.push_back('c');
    seed_input.push_back('h');
    seed_input.push_back('d');
    Digest d = sha256(seed_input);
    std::uint64_t seed = 0;
    for (int i = 0; i < 8; ++i) seed = (seed << 8) | d[static_cast<std::size_t>(i)];
    DetRng rng(seed);

    thread_local std::unordered_map<std::uint32_t, std::uint32_t> displaced;
    displaced.clear();
    auto slot = [&](std::uint32_t idx) {
        auto it = displaced.find(idx);
        return it == displaced.end() ? idx : it->second;
    };
    out.resize(embed_len);
    for (std::uint32_t i = 0; i < embed_len; ++i) {
        std::uint32_t j = i + static_cast<std::uint32_t>(
                                  rng.next_below(payload_len_bits - i));
        out[i] = slot(j);
        displaced[j] = slot(i);
    }
}

inline Schedule position_schedule(const StegKey& sk, std::uint32_t seq,
                                  std::uint32_t payload_len_bits,
                                  std::uint32_t embed_len) {
    Schedule out;
    position_schedule_into(out, sk, seq, payload_len_bits, embed_len);
    return out;
}

// Writes digest bit i to payload bit sched[i]. Digest bits are consumed
// MSB-first, matching payload bit addressing.
inline void embed_digest_prefix(Bytes& payload, const Digest& digest,
                                const Schedule& sched) {
    for (std::size_t i = 0; i < sched.size(); ++i) {
        std::uint32_t off = sched[i];
        if ((off >> 3) >= payload.size())
            throw ScheduleError("schedule offset beyond payload");
        bool bit = (digest[i >> 3] >> (7 - (i & 7))) & 1u;
        set_bit(payload, off, bit);
    }
}

inline Bytes embed_is(Bytes payload, const Digest& digest, const Schedule& sched) {
    embed_digest_prefix(payload, digest, sched);
    return payload;
}

enum class MarkVerdict { None, Request, Carrier, Ambiguous };

// Compares payload bits at scheduled offsets against both candidate digest
// prefixes. Early exit on first mismatch keeps the cost on unmarked traffic
// near one bit comparison per candidate.
inline MarkVerdict detect_mark(const Bytes& payload, const StegKey& sk,
                               std::uint32_t seq, std::uint16_t masked_checksum,
                               std::uint32_t embed_len) {
    std::uint32_t payload_bits = static_cast<std::uint32_t>(payload.size() * 8);
    if (embed_len > payload_bits) return MarkVerdict::None;
    thread_local Schedule sched;
    position_schedule_into(sched, sk, seq, payload_bits, embed_len);

    auto matches = [&](const Digest& d) {
        for (std::size_t i = 0; i < sched.size(); ++i) {
            bool want = (d[i >> 3] >> (7 - (i & 7))) & 1u;
            if (get_bit(payload, sched[i]) != want) return false;
        }
        return true;
    };
    bool req = matches(compute_is(sk, seq, masked_checksum, ControlBit::RequestMark));
    bool stg = matches(compute_is(sk, seq, masked_checksum, ControlBit::StegMark));
    if (req && stg) return MarkVerdict::Ambiguous;
    if (req) return MarkVerdict::Request;
    if (stg) return MarkVerdict::Carrier;
    return MarkVerdict::None;
}

// Free positions: every bit offset not claimed by the schedule, ascending.
// Carrier payloads put steganogram (and restoration) bits there.
inline std::vector<std::uint32_t> free_positions(std::uint32_t payload_len_bits,
                                                 const Schedule& sched) {
    std::vector<bool> taken(payload_len_bits, false);
    for (std::uint32_t off : sched) taken[off] = true;
    std::vector<std::uint32_t> free;
    free.reserve(payload_len_bits - sched.size());
    for (std::uint32_t i = 0; i < payload_len_bits; ++i)
        if (!taken[i]) free.push_back(i);
    return free;
}

inline void fill_free_bits(Bytes& payload, const Schedule& sched,
                           const std::vector<bool>& bits) {
    auto free = free_positions(static_cast<std::uint32_t>(payload.size() * 8), sched);
    if (bits.size() != free.size())
        throw ScheduleError("free-bit fill length mismatch");
    for (std::size_t i = 0; i < free.size(); ++i)
        set_bit(payload, free[i], bits[i]);
}

inline std::vector<bool> extract_free_bits(const Bytes& payload, const Schedule& sched) {
    auto free = free_positions(static_cast<std::uint32_t>(payload.size() * 8), sched);
    std::vector<bool> out(free.size());
    for (std::size_t i = 0; i < free.size(); ++i) out[i] = get_bit(payload, free[i]);
    return out;
}

} // namespace rsteg
