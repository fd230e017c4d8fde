#pragma once

// Flat key=value configuration files and offline trace replay. One key per
// line, `#` starts a comment, unknown and duplicate keys are hard errors so
// a typo cannot silently fall back to a default.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <istream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsteg/metrics.hpp"
#include "rsteg/warden.hpp"

namespace rsteg {

// Input problems (config files, trace files, flag values) as opposed to
// failures inside a simulation; the CLI maps this to its own exit code.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

inline std::uint32_t parse_u32(const std::string& key, const std::string& v) {
    std::uint64_t out = parse_u64(key, v);
    if (out > 0xffffffffull)
        throw ConfigError(key + ": value '" + v + "' does not fit in 32 bits");
    return static_cast<std::uint32_t>(out);
}

inline double parse_fraction(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    if (out < 0.0 || out > 1.0)
        throw ConfigError(key + ": '" + v + "' out of range; units are fractions in [0,1]");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

inline Mechanism parse_mechanism(const std::string& key, const std::string& v) {
    std::string up = v;
    for (char& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    auto m = mechanism_from_name(up);
    if (!m) throw ConfigError(key + ": expected RTO, FRR, or SACK, got '" + v + "'");
    return *m;
}

inline WardenMode parse_warden(const std::string& key, const std::string& v) {
    std::string up = v;
    for (char& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (up == "OFF") return WardenMode::Off;
    if (up == "OBSERVE") return WardenMode::Observe;
    if (up == "DROP") return WardenMode::Drop;
    throw ConfigError(key + ": expected off, observe, or drop, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : v) {
        if (c == ',') {
            parts.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(trim(cur));
    return parts;
}

} // namespace detail

// Parses a configuration stream into the experiment description. The `base`
// topology inside doubles as the single-run configuration for `run` and
// `warden-analyze`; the list fields drive `calibrate` and `sweep`. When
// `seen_keys` is given it receives the set of keys the stream actually set.
inline ExperimentConfig parse_config(std::istream& in,
                                     std::set<std::string>* seen_keys = nullptr) {
    ExperimentConfig ec;
    std::set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) +
                              ": expected key=value, got '" + line + "'");
        std::string key = detail::trim(line.substr(0, eq));
        std::string val = detail::trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (!seen.insert(key).second)
            throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" +
                              key + "'");

        TopologyConfig& t = ec.base;
        if (key == "bottleneck_bandwidth") {
            t.bottleneck_bandwidth = detail::parse_u64(key, val);
        } else if (key == "access_bandwidth") {
            t.access_bandwidth = detail::parse_u64(key, val);
        } else if (key == "link_delay_us") {
            t.link_delay_us = detail::parse_u64(key, val);
        } else if (key == "queue_capacity") {
            t.queue_capacity = detail::parse_u32(key, val);
        } else if (key == "udp_rate") {
            t.udp_rate = detail::parse_u64(key, val);
        } else if (key == "udp_packet_size") {
            t.udp_packet_size = detail::parse_u32(key, val);
        } else if (key == "p_corrupt") {
            t.p_corrupt = detail::parse_fraction(key, val);
        } else if (key == "warden") {
            t.warden = detail::parse_warden(key, val);
        } else if (key == "warden_digest_only") {
            t.warden_digest_only = detail::parse_bool(key, val);
        } else if (key == "seed") {
            t.seed = detail::parse_u64(key, val);
        } else if (key == "mechanism") {
            t.mechanism = detail::parse_mechanism(key, val);
        } else if (key == "mss") {
            t.mss = detail::parse_u32(key, val);
        } else if (key == "rwnd") {
            t.rwnd = detail::parse_u32(key, val);
        } else if (key == "ir_p") {
            t.ir_p = detail::parse_fraction(key, val);
        } else if (key == "scenario") {
            t.scenario = static_cast<int>(detail::parse_u32(key, val));
        } else if (key == "sk") {
            try {
                t.sk = from_hex(val);
            } catch (const std::exception& e) {
                throw ConfigError("sk: " + std::string(e.what()));
            }
            if (t.sk.empty()) throw ConfigError("sk: key must be non-empty hex");
        } else if (key == "embed_len") {
            t.embed_len = detail::parse_u32(key, val);
        } else if (key == "tcp_pace_segments_per_s") {
            t.tcp_pace_segments_per_s = detail::parse_u32(key, val);
        } else if (key == "nr_p_targets") {
            ec.nr_p_targets.clear();
            for (const auto& p : detail::split_list(val))
                ec.nr_p_targets.push_back(detail::parse_fraction(key, p));
            if (ec.nr_p_targets.empty()) throw ConfigError("nr_p_targets: empty list");
        } else if (key == "mechanisms") {
            ec.mechanisms.clear();
            for (const auto& p : detail::split_list(val))
                ec.mechanisms.push_back(detail::parse_mechanism(key, p));
            if (ec.mechanisms.empty()) throw ConfigError("mechanisms: empty list");
        } else if (key == "ir_ps") {
            ec.ir_ps.clear();
            for (const auto& p : detail::split_list(val))
                ec.ir_ps.push_back(detail::parse_fraction(key, p));
            if (ec.ir_ps.empty()) throw ConfigError("ir_ps: empty list");
        } else if (key == "seeds") {
            ec.seeds.clear();
            for (const auto& p : detail::split_list(val))
                ec.seeds.push_back(detail::parse_u64(key, p));
            if (ec.seeds.empty()) throw ConfigError("seeds: empty list");
        } else if (key == "warmup_us") {
            ec.warmup_us = detail::parse_u64(key, val);
        } else if (key == "measure_us") {
            ec.measure_us = detail::parse_u64(key, val);
            if (ec.measure_us == 0) throw ConfigError("measure_us: must be > 0");
        } else if (key == "calibration_tolerance") {
            ec.calibration_tolerance = detail::parse_fraction(key, val);
        } else {
            throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" +
                              key + "'");
        }
    }
    try {
        ec.base.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    if (seen_keys) *seen_keys = seen;
    return ec;
}

// ---- trace replay ----

struct ReplayStats {
    std::uint64_t data_lines = 0;
    std::uint64_t ack_lines = 0;
    std::uint64_t ignored_lines = 0;
};

namespace detail {

// Pulls `key=` out of a trace line; the emitter writes space-separated fields.
inline bool trace_field(const std::string& line, const std::string& key,
                        std::string& out) {
    std::string needle = key + "=";
    std::size_t at = 0;
    while (true) {
        at = line.find(needle, at);
        if (at == std::string::npos) return false;
        if (at == 0 || line[at - 1] == ' ') break;
        at += needle.size();
    }
    std::size_t start = at + needle.size();
    std::size_t end = line.find(' ', start);
    out = line.substr(start, end == std::string::npos ? std::string::npos : end - start);
    return true;
}

} // namespace detail

// Replays warden tap lines from an event trace through a fresh warden.
// Data taps carry a truncated payload digest; equal truncations are treated
// as equal payloads, which matches how the trace was emitted.
inline ReplayStats replay_trace(std::istream& in, Warden& warden) {
    ReplayStats stats;
    std::string line;
    int lineno = 0;
    auto field = [&](const std::string& key) {
        std::string v;
        if (!detail::trace_field(line, key, v))
            throw ConfigError("trace line " + std::to_string(lineno) +
                              ": missing field '" + key + "'");
        return v;
    };
    while (std::getline(in, line)) {
        ++lineno;
        std::string kind;
        if (!detail::trace_field(line, "K", kind)) {
            ++stats.ignored_lines;
            continue;
        }
        if (kind == "TAPD") {
            std::uint64_t t = detail::parse_u64("T", field("T"));
            std::uint32_t seq = detail::parse_u32("seq", field("seq"));
            std::uint32_t len = detail::parse_u32("len", field("len"));
            std::string dig_hex = field("dig");
            Bytes dig_bytes;
            try {
                dig_bytes = from_hex(dig_hex);
            } catch (const std::exception&) {
                throw ConfigError("trace line " + std::to_string(lineno) +
                                  ": bad digest '" + dig_hex + "'");
            }
            Digest digest{};
            if (dig_bytes.size() > digest.size())
                throw ConfigError("trace line " + std::to_string(lineno) +
                                  ": digest too long");
            std::copy(dig_bytes.begin(), dig_bytes.end(), digest.begin());
            bool carrier = field("carrier") == "1";
            warden.observe_digest(0, seq, len, digest, carrier, t);
            ++stats.data_lines;
        } else if (kind == "TAPA") {
            Segment ack;
            ack.conn_id = 0;
            ack.flags = kFlagAck;
            ack.ack = detail::parse_u32("ack", field("ack"));
            warden.observe_ack(ack);
            ++stats.ack_lines;
        } else {
            ++stats.ignored_lines;
        }
    }
    return stats;
}

} // namespace rsteg
