#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rsteg/bytes.hpp"
#include "rsteg/checksum.hpp"

namespace rsteg {

enum class Mechanism { RtoOnly, Frr, Sack };

inline const char* mechanism_name(Mechanism m) {
    switch (m) {
        case Mechanism::RtoOnly: return "RTO";
        case Mechanism::Frr: return "FRR";
        case Mechanism::Sack: return "SACK";
    }
    return "?";
}

inline std::optional<Mechanism> mechanism_from_name(const std::string& s) {
    if (s == "RTO") return Mechanism::RtoOnly;
    if (s == "FRR") return Mechanism::Frr;
    if (s == "SACK") return Mechanism::Sack;
    return std::nullopt;
}

enum class RetransmitCause : std::uint8_t { None, Timeout, FastRetransmit, SackHole };

// Simulator-only ground truth. Excluded from checksums and from what the
// warden is allowed to look at; exists so tests and metrics can classify
// events without guessing.
struct SegMeta {
    bool is_retransmission = false;
    bool is_steg_carrier = false;
    bool is_marked_request = false;
    bool corrupted = false;
    std::uint8_t send_count = 1;
    RetransmitCause cause = RetransmitCause::None;
    std::uint64_t original_send_us = 0;
};

struct SackBlock {
    std::uint32_t left = 0;
    std::uint32_t right = 0; // exclusive
    friend bool operator==(const SackBlock&, const SackBlock&) = default;
};

inline constexpr std::uint8_t kFlagSyn = 0x1;
inline constexpr std::uint8_t kFlagAck = 0x2;
inline constexpr std::uint8_t kFlagFin = 0x4;

struct Segment {
    std::uint32_t conn_id = 0;
    std::uint32_t seq = 0;
    std::uint32_t ack = 0;
    std::uint8_t flags = kFlagAck;
    std::uint16_t window = 0;
    std::uint16_t checksum = 0;
    std::vector<SackBlock> sack_blocks;
    PayloadPtr payload; // null for pure ACKs
    SegMeta meta;

    std::uint32_t payload_len() const {
        return payload ? static_cast<std::uint32_t>(payload->size()) : 0u;
    }
    // 20-byte base header plus a SACK option (2 bytes + 8 per block, padded to
    // a 4-byte boundary) plus payload.
    std::uint32_t wire_size() const {
        std::uint32_t opts = 0;
        if (!sack_blocks.empty()) {
            opts = 2 + 8 * static_cast<std::uint32_t>(sack_blocks.size());
            opts = (opts + 3u) & ~3u;
        }
        return 20 + opts + payload_len();
    }
};

// Endpoint pseudo-addresses for checksum purposes; data always flows from the
// connection's sender address to its receiver address.
inline std::uint32_t sender_addr(std::uint32_t conn_id) { return 0x0a000000u + conn_id * 2 + 1; }
inline std::uint32_t receiver_addr(std::uint32_t conn_id) { return 0x0a000000u + conn_id * 2 + 2; }

namespace detail {

inline void header_bytes(const Segment& seg, std::uint16_t checksum_field, Bytes& out) {
    out.clear();
    put_be16(out, 40000);                      // src port, fixed
    put_be16(out, 50000);                      // dst port, fixed
    put_be32(out, seg.seq);
    put_be32(out, seg.ack);
    std::uint32_t opt_words = seg.sack_blocks.empty()
        ? 0u
        : ((2 + 8 * static_cast<std::uint32_t>(seg.sack_blocks.size()) + 3u) / 4u);
    out.push_back(static_cast<std::uint8_t>((5 + opt_words) << 4)); // data offset
    out.push_back(seg.flags);
    put_be16(out, seg.window);
    put_be16(out, checksum_field);
    put_be16(out, 0); // urgent pointer
    if (!seg.sack_blocks.empty()) {
        out.push_back(5); // option kind: SACK
        out.push_back(static_cast<std::uint8_t>(2 + 8 * seg.sack_blocks.size()));
        for (const auto& b : seg.sack_blocks) {
            put_be32(out, b.left);
            put_be32(out, b.right);
        }
        while (out.size() % 4 != 0) out.push_back(0); // pad to word boundary
    }
}

} // namespace detail

// One's-complement checksum over pseudo-header, header and payload, with the
// checksum field itself zeroed. `payload_override` substitutes payload bytes
// (used for masked-checksum computation without copying the segment).
inline std::uint16_t tcp_checksum(const Segment& seg, std::uint32_t src,
                                  std::uint32_t dst,
                                  const Bytes* payload_override = nullptr) {
    thread_local Bytes hdr;
    detail::header_bytes(seg, 0, hdr);
    const Bytes* pl = payload_override ? payload_override
                                       : (seg.payload ? seg.payload.get() : nullptr);
    std::uint16_t tcp_len =
        static_cast<std::uint16_t>(hdr.size() + (pl ? pl->size() : 0));
    ChecksumAccumulator acc;
    acc.add_u32(src);
    acc.add_u32(dst);
    acc.add_u16(0x0006); // zero byte + protocol
    acc.add_u16(tcp_len);
    acc.add(hdr.data(), hdr.size());
    if (pl) acc.add(pl->data(), pl->size());
    return acc.finish();
}

inline void finalize_checksum(Segment& seg) {
    seg.checksum = tcp_checksum(seg, sender_addr(seg.conn_id), receiver_addr(seg.conn_id));
}

inline void finalize_checksum_reverse(Segment& seg) {
    seg.checksum = tcp_checksum(seg, receiver_addr(seg.conn_id), sender_addr(seg.conn_id));
}

inline bool checksum_valid(const Segment& seg, bool reverse_direction = false) {
    std::uint32_t src = reverse_direction ? receiver_addr(seg.conn_id) : sender_addr(seg.conn_id);
    std::uint32_t dst = reverse_direction ? sender_addr(seg.conn_id) : receiver_addr(seg.conn_id);
    return tcp_checksum(seg, src, dst) == seg.checksum;
}

// RTT estimator with the standard smoothed recurrences, integer microsecond
// arithmetic throughout so results are identical on every platform.
class RttEstimator {
public:
    static constexpr std::uint64_t kRtoMinUs = 1'000'000;
    static constexpr std::uint64_t kRtoMaxUs = 60'000'000;

    void add_sample(std::int64_t sample_us) {
        if (sample_us <= 0) throw std::invalid_argument("rtt sample must be positive");
        if (!has_sample_) {
            srtt_us_ = sample_us;
            rttvar_us_ = sample_us / 2;
            has_sample_ = true;
        } else {
            std::int64_t err = srtt_us_ - sample_us;
            if (err < 0) err = -err;
            rttvar_us_ = (3 * rttvar_us_ + err) / 4;
            srtt_us_ = (7 * srtt_us_ + sample_us) / 8;
        }
        std::int64_t raw = srtt_us_ + 4 * rttvar_us_;
        rto_us_ = std::clamp<std::uint64_t>(static_cast<std::uint64_t>(raw < 0 ? 0 : raw),
                                            kRtoMinUs, kRtoMaxUs);
    }

    bool has_sample() const { return has_sample_; }
    std::int64_t srtt_us() const { return srtt_us_; }
    std::int64_t rttvar_us() const { return rttvar_us_; }
    std::uint64_t rto_us() const { return rto_us_; }

private:
    std::int64_t srtt_us_ = 0;
    std::int64_t rttvar_us_ = 0;
    std::uint64_t rto_us_ = kRtoMinUs;
    bool has_sample_ = false;
};

struct TcpConfig {
    std::uint32_t conn_id = 1;
    std::uint32_t mss = 1000;
    std::uint32_t rwnd = 64000;
    std::uint32_t iss = 1;             // initial sequence number
    std::uint32_t init_cwnd_segs = 2;
    Mechanism mechanism = Mechanism::Frr;
};

// How the engine talks to its surroundings. The simulator wires these to
// event-queue operations; unit tests wire them to plain vectors.
struct SenderEnv {
    std::function<std::uint64_t()> now;
    std::function<void(Segment&&)> emit;
    std::function<void(std::uint64_t abs_us)> arm_rto;  // replaces any armed timer
    std::function<void()> cancel_rto;
    // Fills `out` with `len` application bytes starting at stream offset `off`.
    std::function<void(std::uint64_t off, std::uint32_t len, Bytes& out)> read_app;
};

// Steg-layer integration points. A null hook is plain TCP. Hooks receive the
// fully built segment (header fields final, payload preset) and may swap the
// payload and ground-truth tags before the wire checksum is computed.
class SenderStegHook {
public:
    virtual ~SenderStegHook() = default;
    // First transmission about to be finalized; may mark it in place.
    virtual void on_first_transmission(Segment&) {}
    // Retransmission about to be finalized; may replace seg.payload with a
    // steganogram carrier and set seg.meta.is_steg_carrier.
    virtual void on_retransmission(Segment&) {}
    virtual void on_cumulative_ack(std::uint32_t) {}
};

struct SenderCounters {
    std::uint64_t data_segments_sent = 0; // payload-carrying transmissions, retransmissions included
    std::uint64_t first_transmissions = 0;
    std::uint64_t retransmissions = 0;
    std::uint64_t retrans_timeout = 0;
    std::uint64_t retrans_fast = 0;
    std::uint64_t retrans_sack = 0;
    std::uint64_t rto_events = 0;
};

class TcpSender {
public:
    struct TxSeg {
        PayloadPtr payload;
        std::uint32_t len = 0;
        std::uint8_t send_count = 0;
        std::uint64_t first_send_us = 0;
        bool in_episode = false; // retransmitted within the current recovery episode
    };

    TcpSender(TcpConfig cfg, SenderEnv env, SenderStegHook* hook = nullptr)
        : cfg_(cfg), env_(std::move(env)), hook_(hook) {
        snd_una_ = snd_nxt_ = snd_max_ = cfg_.iss;
        cwnd_ = cfg_.init_cwnd_segs * cfg_.mss;
        ssthresh_ = cfg_.rwnd;
    }

    // Saturating source: unlimited data available.
    void set_saturating() { app_limit_ = 0xffffffffu; try_send(); }

    // Paced source: make `bytes` more application bytes available.
    void app_data_available(std::uint32_t bytes) {
        app_limit_ += bytes;
        try_send();
    }

    void on_ack(const Segment& seg, std::uint64_t now) {
        if (!(seg.flags & kFlagAck)) return;
        std::uint32_t ack = seg.ack;
        if (ack > snd_max_) throw std::logic_error("ack beyond highest sent sequence");
        if (cfg_.mechanism == Mechanism::Sack && !seg.sack_blocks.empty())
            for (const auto& b : seg.sack_blocks) scoreboard_add(b.left, b.right);

        if (ack > snd_una_) {
            for (auto it = queue_.begin(); it != queue_.end() && it->first + it->second.len <= ack;)
                it = queue_.erase(it);
            snd_una_ = ack;
            if (snd_nxt_ < snd_una_) snd_nxt_ = snd_una_; // resend cursor may lag after a rewind
            // One segment is timed at a time; Karn's rule cancels the timing if
            // that segment is ever retransmitted, so this sample is clean.
            if (timed_active_ && ack >= timed_end_) {
                timed_active_ = false;
                std::int64_t sample = static_cast<std::int64_t>(now - timed_at_);
                if (sample > 0) rtt_.add_sample(sample);
            }
            dupacks_ = 0;
            rto_backoff_ = 0;
            backed_off_rto_ = 0;
            if (in_recovery_) {
                in_recovery_ = false;
                cwnd_ = ssthresh_;
                clear_episode();
            } else if (cwnd_ < ssthresh_) {
                cwnd_ += cfg_.mss; // slow start
            } else {
                cwnd_ += std::max<std::uint32_t>(1, cfg_.mss * cfg_.mss / cwnd_);
            }
            scoreboard_trim(snd_una_);
            if (hook_) hook_->on_cumulative_ack(ack);
            if (snd_una_ == snd_nxt_) env_.cancel_rto();
            else env_.arm_rto(now + rtt_.rto_us());
            try_send();
            return;
        }
        if (ack < snd_una_) return; // stale
        if (snd_una_ == snd_nxt_) return; // nothing outstanding; not a dupack
        // Duplicate ACK.
        if (cfg_.mechanism == Mechanism::RtoOnly) return;
        ++dupacks_;
        if (dupacks_ == 3 && !in_recovery_) {
            enter_recovery(now);
        } else if (dupacks_ > 3 && in_recovery_) {
            cwnd_ += cfg_.mss; // inflation
            if (cfg_.mechanism == Mechanism::Sack) retransmit_sack_holes(now);
            try_send();
        }
    }

    void on_rto(std::uint64_t now) {
        if (queue_.empty()) return; // spurious timer
        ++counters_.rto_events;
        std::uint32_t flight = snd_max_ - snd_una_;
        ssthresh_ = std::max(flight / 2, 2 * cfg_.mss);
        cwnd_ = cfg_.mss;
        // Rewind the send cursor: slow start re-sends forward from snd_una
        // until the cursor catches snd_max again, repairing every hole in the
        // window instead of one hole per timeout.
        snd_nxt_ = snd_una_;
        dupacks_ = 0;
        in_recovery_ = false;
        clear_episode();
        scoreboard_.clear();
        ++rto_backoff_;
        backed_off_rto_ = std::min<std::uint64_t>(
            (backed_off_rto_ ? backed_off_rto_ : rtt_.rto_us()) * 2, RttEstimator::kRtoMaxUs);
        env_.arm_rto(now + backed_off_rto_);
        try_send(); // emits the segment at snd_una (cwnd is one segment)
    }

    // Un-SACKed, unacknowledged ranges below the highest SACKed byte, oldest
    // first. With an empty scoreboard, degenerates to the segment at snd_una.
    std::vector<SackBlock> sack_retransmit_ranges() const {
        std::vector<SackBlock> out;
        if (scoreboard_.empty()) {
            auto it = queue_.find(snd_una_);
            if (it != queue_.end())
                out.push_back({snd_una_, snd_una_ + it->second.len});
            return out;
        }
        std::uint32_t cursor = snd_una_;
        for (const auto& b : scoreboard_) {
            if (b.left > cursor) out.push_back({cursor, b.left});
            cursor = std::max(cursor, b.right);
        }
        return out;
    }

    std::uint32_t snd_una() const { return snd_una_; }
    std::uint32_t snd_nxt() const { return snd_nxt_; }
    std::uint32_t snd_max() const { return snd_max_; }
    std::uint32_t cwnd() const { return cwnd_; }
    std::uint32_t ssthresh() const { return ssthresh_; }
    std::uint32_t dupack_count() const { return dupacks_; }
    bool in_recovery() const { return in_recovery_; }
    std::uint32_t rto_backoff_count() const { return rto_backoff_; }
    const RttEstimator& rtt() const { return rtt_; }
    const SenderCounters& counters() const { return counters_; }
    const std::map<std::uint32_t, TxSeg>& retransmit_queue() const { return queue_; }
    const std::vector<SackBlock>& scoreboard() const { return scoreboard_; }
    const TcpConfig& config() const { return cfg_; }

    std::uint64_t stream_offset(std::uint32_t seq) const { return seq - cfg_.iss; }

private:
    void try_send() {
        std::uint64_t now = env_.now();
        std::uint32_t wnd = std::min(cwnd_, cfg_.rwnd);
        while (true) {
            std::uint32_t in_flight = snd_nxt_ - snd_una_;
            if (in_flight >= wnd) break;
            if (snd_nxt_ < snd_max_) { // post-timeout refill: re-send queued data
                auto it = queue_.find(snd_nxt_);
                if (it == queue_.end())
                    throw std::logic_error("resend cursor off a segment boundary");
                retransmit(it->first, it->second, RetransmitCause::Timeout, now);
                snd_nxt_ += it->second.len;
                continue;
            }
            std::uint64_t sent_off = snd_nxt_ - cfg_.iss;
            if (sent_off >= app_limit_) break;
            std::uint32_t len = static_cast<std::uint32_t>(std::min<std::uint64_t>(
                {cfg_.mss, wnd - in_flight, app_limit_ - sent_off}));
            if (len == 0) break;
            // Sender-side SWS avoidance: a short segment is allowed only as the
            // tail of the application stream, never to fill a window sliver.
            if (len < cfg_.mss && sent_off + len < app_limit_) break;
            send_new_segment(len, now);
        }
    }

    void send_new_segment(std::uint32_t len, std::uint64_t now) {
        if (snd_nxt_ > 0xf0000000u)
            throw std::logic_error("sequence space nearly exhausted; shorten the run");
        Segment seg;
        seg.conn_id = cfg_.conn_id;
        seg.seq = snd_nxt_;
        seg.ack = 1;
        seg.flags = kFlagAck;
        seg.window = static_cast<std::uint16_t>(std::min<std::uint32_t>(cfg_.rwnd, 0xffff));
        Bytes data;
        env_.read_app(snd_nxt_ - cfg_.iss, len, data);
        seg.payload = make_payload(std::move(data));
        seg.meta.send_count = 1;
        seg.meta.original_send_us = now;
        if (hook_) hook_->on_first_transmission(seg);
        finalize_checksum(seg);

        TxSeg tx;
        tx.payload = seg.payload;
        tx.len = len;
        tx.send_count = 1;
        tx.first_send_us = now;
        bool was_empty = queue_.empty();
        queue_.emplace(snd_nxt_, std::move(tx));
        if (!timed_active_) {
            timed_active_ = true;
            timed_seq_ = snd_nxt_;
            timed_end_ = snd_nxt_ + len;
            timed_at_ = now;
        }
        snd_nxt_ += len;
        snd_max_ = snd_nxt_;
        ++counters_.data_segments_sent;
        ++counters_.first_transmissions;
        if (was_empty) env_.arm_rto(now + current_rto());
        env_.emit(std::move(seg));
    }

    std::uint64_t current_rto() const {
        return backed_off_rto_ ? backed_off_rto_ : rtt_.rto_us();
    }

    void enter_recovery(std::uint64_t now) {
        std::uint32_t flight = snd_nxt_ - snd_una_;
        ssthresh_ = std::max(flight / 2, 2 * cfg_.mss);
        cwnd_ = ssthresh_ + 3 * cfg_.mss;
        in_recovery_ = true;
        clear_episode();
        if (cfg_.mechanism == Mechanism::Sack) {
            retransmit_sack_holes(now);
        } else {
            auto it = queue_.find(snd_una_);
            if (it != queue_.end())
                retransmit(it->first, it->second, RetransmitCause::FastRetransmit, now);
        }
        try_send();
    }

    void retransmit_sack_holes(std::uint64_t now) {
        for (const auto& hole : sack_retransmit_ranges()) {
            for (auto it = queue_.lower_bound(hole.left);
                 it != queue_.end() && it->first < hole.right; ++it) {
                if (it->second.in_episode) continue;
                retransmit(it->first, it->second,
                           scoreboard_.empty() ? RetransmitCause::FastRetransmit
                                               : RetransmitCause::SackHole,
                           now);
                it->second.in_episode = true;
            }
        }
    }

    void retransmit(std::uint32_t seq, TxSeg& tx, RetransmitCause cause, std::uint64_t now) {
        if (timed_active_ && seq == timed_seq_) timed_active_ = false; // Karn's rule
        Segment seg;
        seg.conn_id = cfg_.conn_id;
        seg.seq = seq;
        seg.ack = 1;
        seg.flags = kFlagAck;
        seg.window = static_cast<std::uint16_t>(std::min<std::uint32_t>(cfg_.rwnd, 0xffff));
        seg.payload = tx.payload;
        seg.meta.is_retransmission = true;
        seg.meta.cause = cause;
        seg.meta.original_send_us = tx.first_send_us;
        ++tx.send_count;
        seg.meta.send_count = tx.send_count;
        if (hook_) hook_->on_retransmission(seg);
        finalize_checksum(seg);
        ++counters_.data_segments_sent;
        ++counters_.retransmissions;
        switch (cause) {
            case RetransmitCause::Timeout: ++counters_.retrans_timeout; break;
            case RetransmitCause::FastRetransmit: ++counters_.retrans_fast; break;
            case RetransmitCause::SackHole: ++counters_.retrans_sack; break;
            default: break;
        }
        env_.emit(std::move(seg));
    }

    void clear_episode() {
        for (auto& [seq, tx] : queue_) tx.in_episode = false;
    }

    void scoreboard_add(std::uint32_t left, std::uint32_t right) {
        if (left >= right) return;
        scoreboard_.push_back({left, right});
        std::sort(scoreboard_.begin(), scoreboard_.end(),
                  [](const SackBlock& a, const SackBlock& b) { return a.left < b.left; });
        std::vector<SackBlock> merged;
        for (const auto& b : scoreboard_) {
            if (!merged.empty() && b.left <= merged.back().right)
                merged.back().right = std::max(merged.back().right, b.right);
            else
                merged.push_back(b);
        }
        scoreboard_ = std::move(merged);
    }

    void scoreboard_trim(std::uint32_t una) {
        std::vector<SackBlock> kept;
        for (auto& b : scoreboard_) {
            if (b.right <= una) continue;
            kept.push_back({std::max(b.left, una), b.right});
        }
        scoreboard_ = std::move(kept);
    }

    TcpConfig cfg_;
    SenderEnv env_;
    SenderStegHook* hook_;
    std::uint32_t snd_una_ = 0, snd_nxt_ = 0, snd_max_ = 0;
    std::uint32_t cwnd_ = 0, ssthresh_ = 0;
    bool timed_active_ = false; // one RTT measurement in flight at a time
    std::uint32_t timed_seq_ = 0, timed_end_ = 0;
    std::uint64_t timed_at_ = 0;
    std::uint64_t app_limit_ = 0; // application bytes made available (stream offset)
    std::map<std::uint32_t, TxSeg> queue_;
    std::vector<SackBlock> scoreboard_;
    RttEstimator rtt_;
    std::uint64_t backed_off_rto_ = 0; // nonzero while in exponential backoff
    std::uint32_t dupacks_ = 0;
    std::uint32_t rto_backoff_ = 0;
    bool in_recovery_ = false;
    SenderCounters counters_;
};

// Receiver core: reassembly and ACK construction only. ACK emission policy
// (normal, clamped, suppressed) belongs to the caller so the steg layer can
// impose its acknowledgment behavior without reaching into TCP state.
class TcpReceiver {
public:
    using DeliverFn = std::function<void(std::uint64_t stream_off, const PayloadPtr&)>;

    TcpReceiver(TcpConfig cfg, DeliverFn deliver)
        : cfg_(cfg), deliver_(std::move(deliver)) {
        rcv_nxt_ = cfg_.iss;
    }

    // Accepts an in-order or out-of-order data segment (checksum already
    // verified by the caller). Returns bytes newly delivered in order.
    std::uint32_t accept_data(const Segment& seg) {
        std::uint32_t len = seg.payload_len();
        if (len == 0) return 0;
        std::uint32_t end = seg.seq + len;
        if (end <= rcv_nxt_) return 0; // stale duplicate
        if (seg.seq > rcv_nxt_) {
            ooo_.emplace(seg.seq, seg.payload); // duplicates ignored
            return 0;
        }
        std::uint32_t before = rcv_nxt_;
        deliver_slice(seg.seq, seg.payload);
        rcv_nxt_ = end;
        // Drain contiguous out-of-order data.
        for (auto it = ooo_.begin(); it != ooo_.end();) {
            std::uint32_t s = it->first;
            std::uint32_t e = s + static_cast<std::uint32_t>(it->second->size());
            if (e <= rcv_nxt_) { it = ooo_.erase(it); continue; }
            if (s > rcv_nxt_) break;
            deliver_slice(s, it->second);
            rcv_nxt_ = e;
            it = ooo_.erase(it);
        }
        return rcv_nxt_ - before;
    }

    // Builds an ACK. `ack_override` clamps the acknowledgment number;
    // `pretend_missing` removes a received range from SACK visibility;
    // `just_arrived` names the block listed first.
    Segment make_ack(std::optional<std::uint32_t> ack_override = std::nullopt,
                     std::optional<SackBlock> pretend_missing = std::nullopt,
                     std::optional<SackBlock> just_arrived = std::nullopt) const {
        Segment ack;
        ack.conn_id = cfg_.conn_id;
        ack.seq = 1;
        ack.flags = kFlagAck;
        ack.window = static_cast<std::uint16_t>(std::min<std::uint32_t>(cfg_.rwnd, 0xffff));
        std::uint32_t ack_no = rcv_nxt_;
        if (ack_override && *ack_override < ack_no) ack_no = *ack_override;
        ack.ack = ack_no;
        if (cfg_.mechanism == Mechanism::Sack)
            ack.sack_blocks = sack_blocks_for(ack_no, pretend_missing, just_arrived);
        finalize_checksum_reverse(ack);
        return ack;
    }

    std::uint32_t rcv_nxt() const { return rcv_nxt_; }
    std::uint64_t delivered_bytes() const { return rcv_nxt_ - cfg_.iss; }
    bool has_ooo() const { return !ooo_.empty(); }
    const std::map<std::uint32_t, PayloadPtr>& ooo_buffer() const { return ooo_; }
    const TcpConfig& config() const { return cfg_; }

private:
    void deliver_slice(std::uint32_t seq, const PayloadPtr& payload) {
        // Deliver only the portion at or above rcv_nxt.
        if (seq >= rcv_nxt_) {
            deliver_(seq - cfg_.iss, payload);
            return;
        }
        std::uint32_t skip = rcv_nxt_ - seq;
        Bytes tail(payload->begin() + skip, payload->end());
        deliver_(rcv_nxt_ - cfg_.iss, make_payload(std::move(tail)));
    }

    std::vector<SackBlock> sack_blocks_for(std::uint32_t ack_no,
                                           std::optional<SackBlock> pretend_missing,
                                           std::optional<SackBlock> just_arrived) const {
        // Received ranges strictly above the acknowledgment number.
        std::vector<SackBlock> ranges;
        if (rcv_nxt_ > ack_no) ranges.push_back({ack_no, rcv_nxt_});
        for (const auto& [s, pl] : ooo_) {
            std::uint32_t e = s + static_cast<std::uint32_t>(pl->size());
            if (!ranges.empty() && s <= ranges.back().right)
                ranges.back().right = std::max(ranges.back().right, e);
            else
                ranges.push_back({s, e});
        }
        if (pretend_missing) ranges = subtract(ranges, *pretend_missing);
        if (ranges.empty()) return {};
        std::vector<SackBlock> ordered;
        if (just_arrived) {
            for (auto& r : ranges)
                if (just_arrived->left >= r.left && just_arrived->right <= r.right) {
                    ordered.push_back(r);
                    break;
                }
        }
        for (auto it = ranges.rbegin(); it != ranges.rend(); ++it)
            if (std::find(ordered.begin(), ordered.end(), *it) == ordered.end())
                ordered.push_back(*it);
        if (ordered.size() > 4) ordered.resize(4);
        return ordered;
    }

    static std::vector<SackBlock> subtract(const std::vector<SackBlock>& ranges,
                                           SackBlock hole) {
        std::vector<SackBlock> out;
        for (const auto& r : ranges) {
            if (hole.right <= r.left || hole.left >= r.right) {
                out.push_back(r);
                continue;
            }
            if (r.left < hole.left) out.push_back({r.left, hole.left});
            if (hole.right < r.right) out.push_back({hole.right, r.right});
        }
        return out;
    }

    TcpConfig cfg_;
    DeliverFn deliver_;
    std::uint32_t rcv_nxt_ = 0;
    std::map<std::uint32_t, PayloadPtr> ooo_;
};

} // namespace rsteg
