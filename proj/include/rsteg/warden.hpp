#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "rsteg/bytes.hpp"
#include "rsteg/sha256.hpp"
#include "rsteg/tcp.hpp"

namespace rsteg {

// Passive warden: stores every data segment seen at the tap until the
// receiver acknowledges it, and compares retransmissions byte for byte
// against the stored original. A differing retransmission is detected and
// dropped at the tap.
class Warden {
public:
    enum class Verdict { Pass, DetectAndDrop };

    struct Report {
        std::uint64_t observed_data = 0;
        std::uint64_t observed_acks = 0;
        std::uint64_t retrans_seen = 0;
        std::uint64_t detections = 0;
        std::uint64_t true_positives = 0;  // ground truth: steganogram carriers
        std::uint64_t false_positives = 0; // ground truth: ordinary traffic
        std::uint64_t evictions = 0;
        std::uint64_t peak_entries = 0;
        std::uint64_t peak_bytes = 0;
        std::vector<std::uint32_t> fp_seqs; // first few, for loss attribution
    };

    // digest_only: store a hash of each payload instead of the bytes,
    // trading exactness guarantees for bounded memory per entry.
    explicit Warden(bool digest_only = false) : digest_only_(digest_only) {}

    Verdict observe_data_segment(const Segment& seg, std::uint64_t now) {
        return observe(seg.conn_id, seg.seq, seg.payload_len(),
                       seg.payload ? *seg.payload : Bytes{},
                       seg.meta.is_steg_carrier, now);
    }

    // Trace-replay entry: the payload is known only by its digest.
    Verdict observe_digest(std::uint64_t conn, std::uint32_t seq, std::uint32_t len,
                           const Digest& digest, bool ground_truth_carrier,
                           std::uint64_t now) {
        Conn& c = conns_[conn];
        ++report_.observed_data;
        auto it = c.store.find(seq);
        if (it == c.store.end()) {
            c.store.emplace(seq, Entry{Bytes{}, digest, len, now});
            ++c.data_seen;
            note_peak(c);
            return Verdict::Pass;
        }
        ++report_.retrans_seen;
        ++c.retrans_seen;
        if (it->second.len == len && it->second.digest == digest) return Verdict::Pass;
        return detect(seq, ground_truth_carrier);
    }

    std::uint64_t observe_ack(const Segment& ack_seg) {
        if (!(ack_seg.flags & kFlagAck)) return 0;
        Conn& c = conns_[ack_seg.conn_id];
        ++report_.observed_acks;
        std::uint64_t evicted = 0;
        for (auto it = c.store.begin(); it != c.store.end();) {
            if (it->first >= ack_seg.ack) break; // every qualifying entry starts below the ack
            if (it->first + it->second.len <= ack_seg.ack) {
                c.stored_bytes -= it->second.payload.size();
                it = c.store.erase(it);
                ++evicted;
            } else {
                ++it;
            }
        }
        report_.evictions += evicted;
        return evicted;
    }

    // Per-connection retransmission rates with outlier flags: a connection is
    // flagged when its rate exceeds `factor` times the population median
    // (lower median for even-sized populations).
    struct ConnRate {
        std::uint64_t conn = 0;
        double rate = 0.0;
        bool flagged = false;
    };

    static std::vector<ConnRate> retrans_rate_monitor(
        const std::map<std::uint64_t, std::pair<std::uint64_t, std::uint64_t>>&
            seen_and_retrans,
        double factor = 2.0) {
        std::vector<ConnRate> out;
        std::vector<double> rates;
        for (const auto& [conn, cnt] : seen_and_retrans) {
            double r = cnt.first ? static_cast<double>(cnt.second) /
                                       static_cast<double>(cnt.first)
                                 : 0.0;
            out.push_back({conn, r, false});
            rates.push_back(r);
        }
        if (rates.empty()) return out;
        std::sort(rates.begin(), rates.end());
        double median = rates[(rates.size() - 1) / 2];
        for (auto& cr : out) cr.flagged = cr.rate > factor * median;
        return out;
    }

    std::vector<ConnRate> connection_rates(double factor = 2.0) const {
        std::map<std::uint64_t, std::pair<std::uint64_t, std::uint64_t>> counters;
        for (const auto& [conn, c] : conns_)
            counters[conn] = {c.data_seen + c.retrans_seen, c.retrans_seen};
        return retrans_rate_monitor(counters, factor);
    }

    const Report& report() const { return report_; }
    std::uint64_t stored_entries() const {
        std::uint64_t n = 0;
        for (const auto& [conn, c] : conns_) n += c.store.size();
        return n;
    }

private:
    struct Entry {
        Bytes payload; // empty in digest mode
        Digest digest{};
        std::uint32_t len = 0;
        std::uint64_t first_seen_us = 0;
    };

    struct Conn {
        std::map<std::uint32_t, Entry> store;
        std::uint64_t stored_bytes = 0;
        std::uint64_t data_seen = 0;    // distinct first observations
        std::uint64_t retrans_seen = 0; // repeat observations of a stored seq
    };

    Verdict observe(std::uint64_t conn, std::uint32_t seq, std::uint32_t len,
                    const Bytes& payload, bool ground_truth_carrier,
                    std::uint64_t now) {
        if (len == 0) return Verdict::Pass;
        Conn& c = conns_[conn];
        ++report_.observed_data;
        auto it = c.store.find(seq);
        if (it == c.store.end()) {
            Entry e;
            e.len = len;
            e.first_seen_us = now;
            if (digest_only_) {
                e.digest = sha256(payload.data(), payload.size());
            } else {
                e.payload = payload;
                c.stored_bytes += payload.size();
            }
            c.store.emplace(seq, std::move(e));
            ++c.data_seen;
            note_peak(c);
            return Verdict::Pass;
        }
        ++report_.retrans_seen;
        ++c.retrans_seen;
        const Entry& e = it->second;
        bool same;
        if (digest_only_)
            same = e.len == len && e.digest == sha256(payload.data(), payload.size());
        else
            same = e.len == len && e.payload == payload;
        if (same) return Verdict::Pass;
        return detect(seq, ground_truth_carrier);
    }

    Verdict detect(std::uint32_t seq, bool ground_truth_carrier) {
        ++report_.detections;
        if (ground_truth_carrier) {
            ++report_.true_positives;
        } else {
            ++report_.false_positives;
            if (report_.fp_seqs.size() < 16) report_.fp_seqs.push_back(seq);
        }
        return Verdict::DetectAndDrop;
    }

    void note_peak(const Conn&) {
        std::uint64_t entries = stored_entries();
        std::uint64_t bytes = 0;
        for (const auto& [conn, c] : conns_) bytes += c.stored_bytes;
        if (entries > report_.peak_entries) report_.peak_entries = entries;
        if (bytes > report_.peak_bytes) report_.peak_bytes = bytes;
    }

    bool digest_only_;
    std::map<std::uint64_t, Conn> conns_;
    Report report_;
};

} // namespace rsteg
