#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "rsteg/bytes.hpp"
#include "rsteg/steg_core.hpp"
#include "rsteg/tcp.hpp"

namespace rsteg {

// Outgoing steganogram bits. Sources must be position-addressable so the
// receiver's extracted stream can be verified as an exact prefix of what was
// offered, regardless of how much the sender consumed.
class StegBitSource {
public:
    virtual ~StegBitSource() = default;
    virtual std::uint64_t available() const = 0; // bits not yet taken
    virtual bool bit_at(std::uint64_t i) const = 0;
    void take(std::size_t n, std::vector<bool>& out) {
        if (n > available()) throw std::logic_error("steg bit underflow");
        out.resize(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = bit_at(taken_ + i);
        taken_ += n;
    }
    std::uint64_t taken() const { return taken_; }

protected:
    std::uint64_t taken_ = 0;
};

// Endless generated pattern; byte j is derived from the seed by mixing, so any
// offset can be regenerated independently.
class GeneratedBits : public StegBitSource {
public:
    explicit GeneratedBits(std::uint64_t seed) : seed_(seed) {}
    std::uint64_t available() const override { return ~0ull - taken_; }
    bool bit_at(std::uint64_t i) const override {
        std::uint8_t byte = static_cast<std::uint8_t>(mix64(seed_ ^ (i >> 3)));
        return (byte >> (7 - (i & 7))) & 1u;
    }

private:
    std::uint64_t seed_;
};

// Finite message supplied as bytes (e.g. read from a file), MSB-first.
class BufferBits : public StegBitSource {
public:
    explicit BufferBits(Bytes data) : data_(std::move(data)) {}
    std::uint64_t available() const override { return data_.size() * 8 - taken_; }
    bool bit_at(std::uint64_t i) const override { return get_bit(data_, i); }

private:
    Bytes data_;
};

inline Bytes pack_bits(const std::vector<bool>& bits) {
    Bytes out((bits.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) out[i >> 3] |= static_cast<std::uint8_t>(0x80u >> (i & 7));
    return out;
}

// Checksum over the segment with the scheduled payload bits zeroed: the value
// both sides feed to the identifying-sequence hash. Per transmission, not per
// sequence number, because carrier free bits participate.
inline std::uint16_t masked_checksum(const Segment& seg, const Schedule& sched) {
    thread_local Bytes buf;
    buf = *seg.payload;
    for (std::uint32_t off : sched) set_bit(buf, off, false);
    return tcp_checksum(seg, sender_addr(seg.conn_id), receiver_addr(seg.conn_id), &buf);
}

struct StegConfig {
    StegKey sk = from_hex("000102030405060708090a0b0c0d0e0f");
    std::uint32_t embed_len = 128;
    double ir_p = 0.0;
    int scenario = 1; // 1: both endpoints covert; 2: SR middlebox; 3: SS middlebox; 4: both
    bool sr_is_middlebox() const { return scenario == 2 || scenario == 4; }
    bool ss_is_middlebox() const { return scenario == 3 || scenario == 4; }
    // Carriers reserve the first free bits to restore the pristine bits the
    // request mark displaced whenever the steganogram receiver is a middlebox
    // feeding an ordinary endpoint (scenarios 2 and 4).
    bool restoration() const { return sr_is_middlebox(); }
    std::uint64_t steg_bits_per_carrier(std::uint32_t payload_len) const {
        std::uint64_t total = 8ull * payload_len;
        std::uint64_t reserved = embed_len + (restoration() ? embed_len : 0);
        return total > reserved ? total - reserved : 0;
    }
};

// Ground-truth registry of intentionally marked sequence numbers, shared by
// whichever node does the marking and by the metrics layer that classifies
// retransmissions as natural or intentional.
struct MarkRegistry {
    std::set<std::uint32_t> seqs;
    void add(std::uint32_t seq) { seqs.insert(seq); }
    bool contains(std::uint32_t seq) const { return seqs.count(seq) != 0; }
};

struct StegSenderCounters {
    std::uint64_t marks_placed = 0;
    std::uint64_t carriers_sent = 0;
    std::uint64_t marks_resolved = 0;
};

// Endpoint steganogram sender (scenarios 1 and 2). Hooks into the TCP sender:
// marks eligible first transmissions and supplies the retransmission payload
// alternation carrier / user data / carrier / ... until the mark is acked.
class StegSenderCtl : public SenderStegHook {
public:
    StegSenderCtl(StegConfig cfg, StegBitSource* bits, MarkRegistry* registry,
                  std::uint64_t rng_seed)
        : cfg_(std::move(cfg)), bits_(bits), registry_(registry), rng_(rng_seed) {}

    void on_first_transmission(Segment& seg) override {
        if (cfg_.ir_p <= 0.0) return; // no draw at all: traces must match a steg-free run
        std::uint32_t len = seg.payload_len();
        if (len == 0 || len * 8 < cfg_.embed_len) return;
        if (outstanding_) return; // one marked segment at a time
        if (bits_->available() < cfg_.steg_bits_per_carrier(len)) return;
        if (!rng_.bernoulli(cfg_.ir_p)) return;
        mark(seg);
    }

    void on_retransmission(Segment& seg) override {
        auto it = states_.find(seg.seq);
        if (it == states_.end()) return; // natural retransmission: original payload
        MarkState& st = it->second;
        ++st.retx_count;
        if (st.retx_count % 2 == 1) {
            // Carrier turn. Built once; rebuilds reuse the cached payload so
            // every carrier copy for a seq is byte-identical.
            if (!st.carrier) st.carrier = build_carrier(seg, st);
            seg.payload = st.carrier;
            seg.meta.is_steg_carrier = true;
            ++counters_.carriers_sent;
        }
        // User-data turn: the queue already holds the marked first-transmission
        // payload, so resending it is byte-identical to the original.
    }

    void on_cumulative_ack(std::uint32_t ack) override {
        if (!outstanding_) return;
        auto it = states_.find(*outstanding_);
        if (it != states_.end() && ack >= it->first + it->second.len) {
            states_.erase(it);
            outstanding_.reset();
            ++counters_.marks_resolved;
        }
    }

    const StegSenderCounters& counters() const { return counters_; }
    bool has_outstanding() const { return outstanding_.has_value(); }

private:
    struct MarkState {
        std::uint32_t len = 0;
        std::vector<bool> displaced; // pristine bits the request mark overwrote
        PayloadPtr carrier;
        std::uint32_t retx_count = 0;
    };

    void mark(Segment& seg) {
        std::uint32_t len = seg.payload_len();
        Schedule sched = position_schedule(cfg_.sk, seg.seq, len * 8, cfg_.embed_len);
        MarkState st;
        st.len = len;
        st.displaced.resize(sched.size());
        for (std::size_t i = 0; i < sched.size(); ++i)
            st.displaced[i] = get_bit(*seg.payload, sched[i]);
        std::uint16_t mck = masked_checksum(seg, sched);
        Bytes marked = *seg.payload;
        embed_digest_prefix(marked, compute_is(cfg_.sk, seg.seq, mck, ControlBit::RequestMark),
                            sched);
        seg.payload = make_payload(std::move(marked));
        seg.meta.is_marked_request = true;
        states_.emplace(seg.seq, std::move(st));
        outstanding_ = seg.seq;
        registry_->add(seg.seq);
        ++counters_.marks_placed;
    }

    PayloadPtr build_carrier(const Segment& seg, MarkState& st) {
        std::uint32_t len = st.len;
        Schedule sched = position_schedule(cfg_.sk, seg.seq, len * 8, cfg_.embed_len);
        std::vector<bool> fill;
        fill.reserve(len * 8 - sched.size());
        if (cfg_.restoration())
            fill.insert(fill.end(), st.displaced.begin(), st.displaced.end());
        std::vector<bool> steg;
        bits_->take(static_cast<std::size_t>(cfg_.steg_bits_per_carrier(len)), steg);
        fill.insert(fill.end(), steg.begin(), steg.end());

        Bytes payload(len, 0);
        fill_free_bits(payload, sched, fill);
        Segment probe = seg; // header fields already final
        probe.payload = make_payload(std::move(payload));
        std::uint16_t mck = masked_checksum(probe, sched);
        Bytes carrier = *probe.payload;
        embed_digest_prefix(carrier, compute_is(cfg_.sk, seg.seq, mck, ControlBit::StegMark),
                            sched);
        return make_payload(std::move(carrier));
    }

    StegConfig cfg_;
    StegBitSource* bits_;
    MarkRegistry* registry_;
    DetRng rng_;
    std::optional<std::uint32_t> outstanding_;
    std::map<std::uint32_t, MarkState> states_;
    StegSenderCounters counters_;
};

struct StegReceiverCounters {
    std::uint64_t carriers_extracted = 0; // N_S: distinct carriers whose bits were taken
    std::uint64_t marks_pended = 0;
    std::uint64_t unexpected_steg = 0;
    std::uint64_t anomalies = 0;
    std::uint64_t acks_suppressed = 0;
};

// Endpoint steganogram receiver (scenarios 1 and 3). Owns the TCP receiver so
// it fully controls acknowledgment emission: clamped below a pending mark,
// suppressed where timeout-based triggering demands silence.
class StegReceiver {
public:
    StegReceiver(TcpConfig tcp_cfg, StegConfig cfg, TcpReceiver::DeliverFn deliver)
        : cfg_(std::move(cfg)), tcp_(tcp_cfg, std::move(deliver)),
          mech_(tcp_cfg.mechanism) {}

    // Checksum-valid data segment in; at most one ACK out (none = suppressed).
    std::optional<Segment> on_data(const Segment& seg, std::uint64_t /*now*/) {
        std::uint32_t len = seg.payload_len();
        if (len == 0) return std::nullopt;
        MarkVerdict verdict = MarkVerdict::None;
        if (steg_enabled_ && len * 8 >= cfg_.embed_len) {
            position_schedule_into(sched_, cfg_.sk, seg.seq, len * 8, cfg_.embed_len);
            std::uint16_t mck = masked_checksum(seg, sched_);
            verdict = detect_with(sched_, seg, mck);
        }
        switch (verdict) {
            case MarkVerdict::Ambiguous:
                ++counters_.anomalies;
                [[fallthrough]];
            case MarkVerdict::None:
                return on_plain_data(seg);
            case MarkVerdict::Request:
                return on_request_mark(seg);
            case MarkVerdict::Carrier:
                return on_carrier(seg);
        }
        return std::nullopt;
    }

    void disable_steg() { steg_enabled_ = false; }

    const StegReceiverCounters& counters() const { return counters_; }
    const std::vector<bool>& extracted_bits() const { return extracted_; }
    const TcpReceiver& tcp() const { return tcp_; }
    bool has_pending_mark() const { return pending_.has_value(); }
    std::uint32_t pending_seq() const { return pending_->seq; }
    std::uint32_t pending_len() const { return pending_->len; }

private:
    struct Pending {
        std::uint32_t seq = 0;
        std::uint32_t len = 0;
    };

    MarkVerdict detect_with(const Schedule& sched, const Segment& seg, std::uint16_t mck) {
        auto matches = [&](const Digest& d) {
            for (std::size_t i = 0; i < sched.size(); ++i) {
                bool want = (d[i >> 3] >> (7 - (i & 7))) & 1u;
                if (get_bit(*seg.payload, sched[i]) != want) return false;
            }
            return true;
        };
        bool req = matches(compute_is(cfg_.sk, seg.seq, mck, ControlBit::RequestMark));
        bool stg = matches(compute_is(cfg_.sk, seg.seq, mck, ControlBit::StegMark));
        if (req && stg) return MarkVerdict::Ambiguous;
        if (req) return MarkVerdict::Request;
        if (stg) return MarkVerdict::Carrier;
        return MarkVerdict::None;
    }

    std::optional<Segment> on_plain_data(const Segment& seg) {
        std::uint32_t len = seg.payload_len();
        bool was_unexpected = unexpected_.erase(seg.seq) != 0;
        tcp_.accept_data(seg);
        if (was_unexpected) return tcp_.make_ack(); // user data recovered; full ack
        return clamped_ack(SackBlock{seg.seq, seg.seq + len});
    }

    std::optional<Segment> on_request_mark(const Segment& seg) {
        std::uint32_t len = seg.payload_len();
        if (pending_ && pending_->seq == seg.seq) {
            // Duplicate mark while still pending (user-data turn of the
            // sender's recovery alternation, or a network duplicate).
            ++counters_.anomalies;
            tcp_.accept_data(seg); // idempotent: already buffered/delivered
            if (mech_ == Mechanism::RtoOnly) {
                ++counters_.acks_suppressed;
                return std::nullopt;
            }
            return clamped_ack(std::nullopt);
        }
        if (unexpected_.count(seg.seq)) {
            // Marked user-data turn for a seq whose steganogram already
            // arrived: deliver and release.
            unexpected_.erase(seg.seq);
            tcp_.accept_data(seg);
            return tcp_.make_ack();
        }
        if (extracted_seqs_.count(seg.seq)) {
            // Stale duplicate of an already-resolved mark.
            tcp_.accept_data(seg);
            return clamped_ack(SackBlock{seg.seq, seg.seq + len});
        }
        // Fresh mark: deliver the data internally but withhold acknowledgment
        // to invoke a retransmission.
        tcp_.accept_data(seg);
        pending_ = Pending{seg.seq, len};
        ++counters_.marks_pended;
        if (mech_ == Mechanism::RtoOnly) {
            ++counters_.acks_suppressed;
            return std::nullopt;
        }
        return clamped_ack(std::nullopt);
    }

    std::optional<Segment> on_carrier(const Segment& seg) {
        std::uint32_t len = seg.payload_len();
        extract_once(seg);
        if (pending_ && pending_->seq == seg.seq) {
            pending_.reset();
            return tcp_.make_ack(); // release: full cumulative acknowledgment
        }
        std::uint32_t end = seg.seq + len;
        if (end <= tcp_.rcv_nxt()) {
            // Stale carrier duplicate after resolution.
            return clamped_ack(std::nullopt);
        }
        // The request mark never arrived: hold the steganogram, leave the data
        // hole open, and wait for the user-data retransmission.
        if (!unexpected_.count(seg.seq)) {
            unexpected_.insert(seg.seq);
            ++counters_.unexpected_steg;
        }
        if (mech_ == Mechanism::RtoOnly) {
            ++counters_.acks_suppressed;
            return std::nullopt;
        }
        return clamped_ack(std::nullopt);
    }

    void extract_once(const Segment& seg) {
        if (!extracted_seqs_.insert(seg.seq).second) return;
        std::uint32_t len = seg.payload_len();
        Schedule sched = position_schedule(cfg_.sk, seg.seq, len * 8, cfg_.embed_len);
        auto bits = extract_free_bits(*seg.payload, sched);
        std::size_t skip = cfg_.restoration() ? cfg_.embed_len : 0;
        extracted_.insert(extracted_.end(), bits.begin() + skip, bits.end());
        ++counters_.carriers_extracted;
    }

    // ACK with the pending-mark ceiling applied: the acknowledgment number
    // never covers a pending mark, and in SACK mode the mark's range is
    // withheld from the advertised blocks.
    std::optional<Segment> clamped_ack(std::optional<SackBlock> just_arrived) {
        if (!pending_)
            return tcp_.make_ack(std::nullopt, std::nullopt, just_arrived);
        return tcp_.make_ack(pending_->seq,
                             SackBlock{pending_->seq, pending_->seq + pending_->len},
                             just_arrived);
    }

    StegConfig cfg_;
    TcpReceiver tcp_;
    Mechanism mech_;
    bool steg_enabled_ = true;
    Schedule sched_;
    std::optional<Pending> pending_;
    std::set<std::uint32_t> unexpected_;
    std::set<std::uint32_t> extracted_seqs_;
    std::vector<bool> extracted_;
    StegReceiverCounters counters_;
};

// Middlebox actions on a passing segment.
enum class MidAction { Forward, Drop };

struct MidResult {
    MidAction action = MidAction::Forward;
    Segment seg; // the (possibly rebuilt) segment to forward
};

// Steganogram-sender middlebox (scenarios 3 and 4), placed on the sender-side
// router. Selects passing first transmissions, forces their retransmission
// (scenario 3: drops the original; scenario 4: request-marks it so the
// receiver-side middlebox drops it), then swaps carriers into retransmissions
// on the same alternation the endpoint sender uses.
class StegMiddleboxSender {
public:
    StegMiddleboxSender(StegConfig cfg, StegBitSource* bits, MarkRegistry* registry,
                        std::uint64_t rng_seed)
        : cfg_(std::move(cfg)), bits_(bits), registry_(registry), rng_(rng_seed) {}

    MidResult on_data(const Segment& seg) {
        std::uint32_t len = seg.payload_len();
        if (len == 0) return forward(seg);
        // A checksum-invalid segment is already dead; touching it (and
        // recomputing its checksum) would launder the corruption.
        if (!checksum_valid(seg)) return forward(seg);
        auto it = states_.find(seg.seq);
        if (it != states_.end()) {
            MarkState& st = it->second;
            ++st.retx_count;
            if (st.retx_count % 2 == 1) {
                if (!st.carrier) st.carrier = build_carrier(seg, st);
                Segment out = seg;
                out.payload = st.carrier;
                out.meta.is_steg_carrier = true;
                finalize_checksum(out);
                ++counters_.carriers_sent;
                return {MidAction::Forward, std::move(out)};
            }
            return forward(seg); // user-data turn passes through untouched
        }
        bool first_transmission = seg.seq >= next_unseen_;
        if (first_transmission) next_unseen_ = seg.seq + len;
        if (cfg_.ir_p <= 0.0 || !first_transmission) return forward(seg);
        if (outstanding_ || len * 8 < cfg_.embed_len) return forward(seg);
        if (bits_->available() < cfg_.steg_bits_per_carrier(len)) return forward(seg);
        if (!rng_.bernoulli(cfg_.ir_p)) return forward(seg);
        return select(seg);
    }

    void on_ack(const Segment& ack) {
        if (!outstanding_) return;
        auto it = states_.find(*outstanding_);
        if (it != states_.end() && ack.ack >= it->first + it->second.len) {
            states_.erase(it);
            outstanding_.reset();
            ++counters_.marks_resolved;
        }
    }

    const StegSenderCounters& counters() const { return counters_; }

private:
    struct MarkState {
        std::uint32_t len = 0;
        std::vector<bool> displaced;
        PayloadPtr carrier;
        std::uint32_t retx_count = 0;
    };

    static MidResult forward(const Segment& seg) { return {MidAction::Forward, seg}; }

    MidResult select(const Segment& seg) {
        std::uint32_t len = seg.payload_len();
        Schedule sched = position_schedule(cfg_.sk, seg.seq, len * 8, cfg_.embed_len);
        MarkState st;
        st.len = len;
        st.displaced.resize(sched.size());
        for (std::size_t i = 0; i < sched.size(); ++i)
            st.displaced[i] = get_bit(*seg.payload, sched[i]);
        std::uint32_t seq = seg.seq;
        registry_->add(seq);
        ++counters_.marks_placed;
        outstanding_ = seq;
        if (cfg_.scenario == 3) {
            // Copy the payload state and drop: the sender's own loss detection
            // triggers the retransmission the carrier will ride on.
            states_.emplace(seq, std::move(st));
            return {MidAction::Drop, {}};
        }
        // Scenario 4: request-mark the segment in flight so the receiver-side
        // middlebox stores and drops it.
        std::uint16_t mck = masked_checksum(seg, sched);
        Bytes marked = *seg.payload;
        embed_digest_prefix(marked, compute_is(cfg_.sk, seq, mck, ControlBit::RequestMark),
                            sched);
        Segment out = seg;
        out.payload = make_payload(std::move(marked));
        out.meta.is_marked_request = true;
        finalize_checksum(out);
        states_.emplace(seq, std::move(st));
        return {MidAction::Forward, std::move(out)};
    }

    PayloadPtr build_carrier(const Segment& seg, MarkState& st) {
        std::uint32_t len = st.len;
        Schedule sched = position_schedule(cfg_.sk, seg.seq, len * 8, cfg_.embed_len);
        std::vector<bool> fill;
        fill.reserve(len * 8 - sched.size());
        if (cfg_.restoration())
            fill.insert(fill.end(), st.displaced.begin(), st.displaced.end());
        std::vector<bool> steg;
        bits_->take(static_cast<std::size_t>(cfg_.steg_bits_per_carrier(len)), steg);
        fill.insert(fill.end(), steg.begin(), steg.end());
        Bytes payload(len, 0);
        fill_free_bits(payload, sched, fill);
        Segment probe = seg;
        probe.payload = make_payload(std::move(payload));
        std::uint16_t mck = masked_checksum(probe, sched);
        Bytes carrier = *probe.payload;
        embed_digest_prefix(carrier, compute_is(cfg_.sk, seg.seq, mck, ControlBit::StegMark),
                            sched);
        return make_payload(std::move(carrier));
    }

    StegConfig cfg_;
    StegBitSource* bits_;
    MarkRegistry* registry_;
    DetRng rng_;
    std::uint32_t next_unseen_ = 0;
    std::optional<std::uint32_t> outstanding_;
    std::map<std::uint32_t, MarkState> states_;
    StegSenderCounters counters_;
};

struct MidReceiverCounters {
    std::uint64_t carriers_extracted = 0;
    std::uint64_t marks_stored = 0;
    std::uint64_t mark_drops = 0;
    std::uint64_t restored_forwards = 0;
    std::uint64_t anomalies = 0; // carrier with no stored original
};

// Steganogram-receiver middlebox (scenarios 2 and 4), placed on the
// receiver-side router. Stores and drops request-marked transmissions, and on
// a carrier rebuilds the pristine payload from the stored copy plus the
// carrier's restoration bits, forwarding it to the ordinary endpoint.
class StegMiddleboxReceiver {
public:
    explicit StegMiddleboxReceiver(StegConfig cfg) : cfg_(std::move(cfg)) {}

    MidResult on_data(const Segment& seg) {
        std::uint32_t len = seg.payload_len();
        if (len == 0 || len * 8 < cfg_.embed_len) return {MidAction::Forward, seg};
        if (!checksum_valid(seg)) return {MidAction::Forward, seg};
        position_schedule_into(sched_, cfg_.sk, seg.seq, len * 8, cfg_.embed_len);
        std::uint16_t mck = masked_checksum(seg, sched_);
        MarkVerdict v = detect_with(seg, mck);
        switch (v) {
            case MarkVerdict::Ambiguous:
                ++counters_.anomalies;
                return {MidAction::Forward, seg};
            case MarkVerdict::None: {
                // Pristine user data ends any covert exchange for this seq:
                // clear a storeless-extraction hold and any stale stored copy.
                awaiting_user_.erase(seg.seq);
                stored_.erase(seg.seq);
                return {MidAction::Forward, seg};
            }
            case MarkVerdict::Request: {
                stored_[seg.seq] = seg.payload; // byte-identical on every marked turn
                ++counters_.marks_stored;
                ++counters_.mark_drops;
                return {MidAction::Drop, {}};
            }
            case MarkVerdict::Carrier: {
                extract_once(seg);
                auto it = stored_.find(seg.seq);
                if (it == stored_.end()) {
                    // The marked original never crossed; hold out for the
                    // user-data turn instead of forwarding steg bytes onward.
                    ++counters_.anomalies;
                    awaiting_user_.insert(seg.seq);
                    return {MidAction::Drop, {}};
                }
                Bytes restored = *it->second;
                auto restoration = restoration_bits(seg);
                for (std::size_t i = 0; i < sched_.size(); ++i)
                    set_bit(restored, sched_[i], restoration[i]);
                stored_.erase(it);
                Segment out = seg;
                out.payload = make_payload(std::move(restored));
                out.meta.is_steg_carrier = false;
                out.meta.is_marked_request = false;
                finalize_checksum(out);
                ++counters_.restored_forwards;
                return {MidAction::Forward, std::move(out)};
            }
        }
        return {MidAction::Forward, seg};
    }

    const MidReceiverCounters& counters() const { return counters_; }
    const std::vector<bool>& extracted_bits() const { return extracted_; }

private:
    MarkVerdict detect_with(const Segment& seg, std::uint16_t mck) {
        auto matches = [&](const Digest& d) {
            for (std::size_t i = 0; i < sched_.size(); ++i) {
                bool want = (d[i >> 3] >> (7 - (i & 7))) & 1u;
                if (get_bit(*seg.payload, sched_[i]) != want) return false;
            }
            return true;
        };
        bool req = matches(compute_is(cfg_.sk, seg.seq, mck, ControlBit::RequestMark));
        bool stg = matches(compute_is(cfg_.sk, seg.seq, mck, ControlBit::StegMark));
        if (req && stg) return MarkVerdict::Ambiguous;
        if (req) return MarkVerdict::Request;
        if (stg) return MarkVerdict::Carrier;
        return MarkVerdict::None;
    }

    std::vector<bool> restoration_bits(const Segment& seg) {
        auto bits = extract_free_bits(*seg.payload, sched_);
        bits.resize(cfg_.embed_len);
        return bits;
    }

    void extract_once(const Segment& seg) {
        if (!extracted_seqs_.insert(seg.seq).second) return;
        auto bits = extract_free_bits(*seg.payload, sched_);
        std::size_t skip = cfg_.restoration() ? cfg_.embed_len : 0;
        extracted_.insert(extracted_.end(), bits.begin() + skip, bits.end());
        ++counters_.carriers_extracted;
    }

    StegConfig cfg_;
    Schedule sched_;
    std::map<std::uint32_t, PayloadPtr> stored_;
    std::set<std::uint32_t> awaiting_user_;
    std::set<std::uint32_t> extracted_seqs_;
    std::vector<bool> extracted_;
    MidReceiverCounters counters_;
};

} // namespace rsteg
