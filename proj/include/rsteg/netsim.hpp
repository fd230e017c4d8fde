#pragma once

#include <algorithm>
#include <array>
#include <cinttypes>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsteg/bytes.hpp"
#include "rsteg/rsteg_control.hpp"
#include "rsteg/tcp.hpp"
#include "rsteg/warden.hpp"

namespace rsteg {

enum class WardenMode { Off, Observe, Drop };

inline const char* warden_mode_name(WardenMode m) {
    switch (m) {
        case WardenMode::Off: return "off";
        case WardenMode::Observe: return "observe";
        case WardenMode::Drop: return "drop";
    }
    return "?";
}

inline std::optional<WardenMode> warden_mode_from_name(const std::string& s) {
    if (s == "off") return WardenMode::Off;
    if (s == "observe") return WardenMode::Observe;
    if (s == "drop") return WardenMode::Drop;
    return std::nullopt;
}

// One TCP source and one UDP constant-bit-rate source feed router R1; the
// bottleneck carries both to R2, which feeds the sink. All links are
// full-duplex with drop-tail queues; acknowledgments ride the reverse path.
struct TopologyConfig {
    std::uint64_t bottleneck_bandwidth = 2'000'000; // X, bits/s
    std::uint64_t access_bandwidth = 10'000'000;    // bits/s
    std::uint64_t link_delay_us = 10'000;
    std::uint32_t queue_capacity = 50; // packets, per direction
    std::uint64_t udp_rate = 1'000'000; // bits/s; 0 disables cross traffic
    std::uint32_t udp_packet_size = 1000; // payload bytes
    double p_corrupt = 0.0;
    WardenMode warden = WardenMode::Off;
    bool warden_digest_only = false;
    std::uint64_t seed = 1;

    Mechanism mechanism = Mechanism::Frr;
    std::uint32_t mss = 1000;
    std::uint32_t rwnd = 64000;
    double ir_p = 0.0;
    int scenario = 1;
    StegKey sk = from_hex("000102030405060708090a0b0c0d0e0f");
    std::uint32_t embed_len = 128;
    std::uint32_t tcp_pace_segments_per_s = 0; // 0: saturating source

    void validate() const {
        if (bottleneck_bandwidth == 0) throw std::invalid_argument("bottleneck_bandwidth must be > 0");
        if (access_bandwidth == 0) throw std::invalid_argument("access_bandwidth must be > 0");
        if (queue_capacity == 0) throw std::invalid_argument("queue_capacity must be >= 1");
        if (udp_rate > 0 && udp_packet_size == 0)
            throw std::invalid_argument("udp_packet_size must be > 0 when udp_rate > 0");
        if (p_corrupt < 0.0 || p_corrupt > 1.0)
            throw std::invalid_argument("p_corrupt must be a fraction in [0,1]");
        if (ir_p < 0.0 || ir_p > 1.0)
            throw std::invalid_argument("ir_p must be a fraction in [0,1]");
        if (scenario < 1 || scenario > 4) throw std::invalid_argument("scenario must be 1..4");
        if (mss < 16) throw std::invalid_argument("mss must be at least 16 bytes");
        if (mss * 8 < embed_len)
            throw std::invalid_argument("embed_len does not fit in one segment payload");
        if (rwnd < mss) throw std::invalid_argument("rwnd must be at least one mss");
        if (sk.empty()) throw std::invalid_argument("sk must be non-empty");
    }
};

// Cumulative totals; the per-window report is a difference of two snapshots.
struct SimCounters {
    std::uint64_t data_segments_sent = 0;
    std::uint64_t first_transmissions = 0;
    std::uint64_t retransmissions = 0;
    std::uint64_t retrans_natural = 0;
    std::uint64_t retrans_intentional = 0;
    std::uint64_t retrans_timeout = 0;
    std::uint64_t retrans_fast = 0;
    std::uint64_t retrans_sack = 0;
    std::uint64_t rto_events = 0;
    std::uint64_t carriers_extracted = 0;
    std::uint64_t steg_bits_extracted = 0;
    std::uint64_t marks_placed = 0;
    std::uint64_t marks_resolved = 0;
    std::uint64_t delivered_segments = 0;
    std::uint64_t delivered_bytes = 0;
    std::uint64_t acks_sent = 0;
    std::uint64_t checksum_discards = 0;
    std::uint64_t corrupted_segments = 0;
    std::uint64_t queue_drops_tcp = 0;
    std::uint64_t queue_drops_ack = 0;
    std::uint64_t queue_drops_udp = 0;
    std::uint64_t warden_drops = 0;
    std::uint64_t mid_drops = 0;
    std::uint64_t injected_drops = 0;
    std::uint64_t udp_sent = 0;
    std::uint64_t udp_delivered = 0;

    bool operator==(const SimCounters&) const = default;

    SimCounters operator-(const SimCounters& o) const {
        SimCounters d;
        d.data_segments_sent = data_segments_sent - o.data_segments_sent;
        d.first_transmissions = first_transmissions - o.first_transmissions;
        d.retransmissions = retransmissions - o.retransmissions;
        d.retrans_natural = retrans_natural - o.retrans_natural;
        d.retrans_intentional = retrans_intentional - o.retrans_intentional;
        d.retrans_timeout = retrans_timeout - o.retrans_timeout;
        d.retrans_fast = retrans_fast - o.retrans_fast;
        d.retrans_sack = retrans_sack - o.retrans_sack;
        d.rto_events = rto_events - o.rto_events;
        d.carriers_extracted = carriers_extracted - o.carriers_extracted;
        d.steg_bits_extracted = steg_bits_extracted - o.steg_bits_extracted;
        d.marks_placed = marks_placed - o.marks_placed;
        d.marks_resolved = marks_resolved - o.marks_resolved;
        d.delivered_segments = delivered_segments - o.delivered_segments;
        d.delivered_bytes = delivered_bytes - o.delivered_bytes;
        d.acks_sent = acks_sent - o.acks_sent;
        d.checksum_discards = checksum_discards - o.checksum_discards;
        d.corrupted_segments = corrupted_segments - o.corrupted_segments;
        d.queue_drops_tcp = queue_drops_tcp - o.queue_drops_tcp;
        d.queue_drops_ack = queue_drops_ack - o.queue_drops_ack;
        d.queue_drops_udp = queue_drops_udp - o.queue_drops_udp;
        d.warden_drops = warden_drops - o.warden_drops;
        d.mid_drops = mid_drops - o.mid_drops;
        d.injected_drops = injected_drops - o.injected_drops;
        d.udp_sent = udp_sent - o.udp_sent;
        d.udp_delivered = udp_delivered - o.udp_delivered;
        return d;
    }
};

struct RunReport {
    SimCounters window;     // measurement-window deltas
    SimCounters total;      // whole run including warmup
    double measure_seconds = 0.0;
    std::uint32_t segment_payload_bytes = 0; // S_S
    Warden::Report warden;                   // whole run
    bool stream_intact = true;
    std::uint64_t first_mismatch_off = 0;
    std::uint64_t delivered_bytes_total = 0;
    double retrans_rate() const {
        return window.data_segments_sent
                   ? static_cast<double>(window.retransmissions) /
                         static_cast<double>(window.data_segments_sent)
                   : 0.0;
    }
};

class Simulation {
public:
    explicit Simulation(TopologyConfig cfg)
        : cfg_((cfg.validate(), std::move(cfg))),
          steg_bits_(substream_seed(cfg_.seed, RngStream::StegBits)),
          corrupt_rng_(substream(cfg_.seed, RngStream::Corruption)),
          jitter_rng_(substream(cfg_.seed, RngStream::UdpJitter)),
          warden_(cfg_.warden_digest_only) {
        scfg_.sk = cfg_.sk;
        scfg_.embed_len = cfg_.embed_len;
        scfg_.ir_p = cfg_.ir_p;
        scfg_.scenario = cfg_.scenario;
        build_links();
        bool steg_on = cfg_.ir_p > 0.0;
        if (steg_on && scfg_.ss_is_middlebox())
            midss_.emplace(scfg_, &steg_bits_, &registry_,
                           substream_seed(cfg_.seed, RngStream::StegMark));
        if (steg_on && scfg_.sr_is_middlebox()) midsr_.emplace(scfg_);
        if (steg_on && !scfg_.ss_is_middlebox())
            ctl_.emplace(scfg_, &steg_bits_, &registry_,
                         substream_seed(cfg_.seed, RngStream::StegMark));

        TcpConfig tcfg;
        tcfg.conn_id = 1;
        tcfg.mss = cfg_.mss;
        tcfg.rwnd = cfg_.rwnd;
        tcfg.iss = 1;
        tcfg.mechanism = cfg_.mechanism;
        rcv_.emplace(tcfg, scfg_, [this](std::uint64_t off, const PayloadPtr& p) {
            on_deliver(off, p);
        });
        if (!steg_on || scfg_.sr_is_middlebox()) rcv_->disable_steg();

        snd_.emplace(tcfg,
                     SenderEnv{
                         [this] { return now_; },
                         [this](Segment&& s) { on_tcp_emit(std::move(s)); },
                         [this](std::uint64_t t) { arm_timer(t); },
                         [this] { ++timer_gen_; },
                         [](std::uint64_t off, std::uint32_t len, Bytes& out) {
                             out = app_bytes(off, len);
                         }},
                     ctl_ ? &*ctl_ : nullptr);

        if (cfg_.udp_rate > 0) schedule_udp(0);
        if (cfg_.tcp_pace_segments_per_s > 0) {
            pace_interval_us_ = 1'000'000ull / cfg_.tcp_pace_segments_per_s;
            if (pace_interval_us_ == 0) pace_interval_us_ = 1;
            schedule(Event::pace(0));
        } else {
            snd_->set_saturating();
        }
    }

    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    void set_trace(std::ostream* os) { trace_ = os; }
    // Test hooks: observe every data segment leaving the TCP source,
    // optionally delete chosen ones before they enter the network, and watch
    // each in-order slice as the receiving application consumes it.
    std::function<void(const Segment&)> on_data_sent;
    std::function<bool(const Segment&)> drop_filter;
    std::function<void(std::uint64_t, const Bytes&)> on_delivered;

    static constexpr int node_count() { return 5; } // 2 sources, 2 routers, 1 sink
    static constexpr int link_count() { return 4; } // full-duplex links

    static std::uint64_t serialization_us(std::uint64_t wire_bytes, std::uint64_t bw_bps) {
        return (wire_bytes * 8ull * 1'000'000ull + bw_bps - 1) / bw_bps;
    }

    RunReport run(std::uint64_t warmup_us, std::uint64_t measure_us) {
        if (ran_) throw std::logic_error("simulation instances are single-use");
        ran_ = true;
        run_until(warmup_us);
        SimCounters at_warmup = gather();
        run_until(warmup_us + measure_us);
        RunReport rep;
        rep.total = gather();
        rep.window = rep.total - at_warmup;
        rep.measure_seconds = static_cast<double>(measure_us) / 1e6;
        rep.segment_payload_bytes = cfg_.mss;
        rep.warden = warden_.report();
        rep.stream_intact = stream_intact_;
        rep.first_mismatch_off = first_mismatch_off_;
        rep.delivered_bytes_total = delivered_bytes_;
        return rep;
    }

    // Introspection for tests and the metrics layer.
    const TcpSender& sender() const { return *snd_; }
    const StegReceiver& receiver() const { return *rcv_; }
    StegSenderCounters steg_sender_counters() const {
        if (midss_) return midss_->counters();
        if (ctl_) return ctl_->counters();
        return {};
    }
    const Warden& warden() const { return warden_; }
    const MarkRegistry& registry() const { return registry_; }
    const TopologyConfig& config() const { return cfg_; }
    std::uint64_t now() const { return now_; }
    bool steg_source_bit(std::uint64_t i) const { return steg_bits_.bit_at(i); }
    std::uint64_t steg_bits_taken() const { return steg_bits_.taken(); }
    const std::vector<bool>& extracted_bits() const {
        if (midsr_) return midsr_->extracted_bits();
        return rcv_->extracted_bits();
    }
    std::uint64_t tcp_data_in_transit() const {
        std::uint64_t n = 0;
        for (const auto& l : links_)
            for (const auto& p : l.q)
                if (p.kind == Packet::Kind::TcpData) ++n;
        for (const auto& ev : heap_)
            if (ev.kind == Event::Kind::Arrival && ev.pkt.kind == Packet::Kind::TcpData) ++n;
        return n;
    }
    SimCounters counters() const { return gather(); }

private:
    // Directed link ids. One full-duplex link = forward + reverse pair.
    enum : std::uint8_t {
        kAccessFwd = 0, // TCP source -> R1
        kBottFwd = 1,   // R1 -> R2
        kSinkFwd = 2,   // R2 -> sink
        kUdpFwd = 3,    // UDP source -> R1
        kAccessRev = 4, // R1 -> TCP source
        kBottRev = 5,   // R2 -> R1
        kSinkRev = 6,   // sink -> R2
        kUdpRev = 7,    // R1 -> UDP source (idle)
        kNumLinks = 8
    };

    struct Packet {
        enum class Kind : std::uint8_t { TcpData, TcpAck, Udp };
        Kind kind = Kind::Udp;
        Segment seg;
        std::uint32_t wire_bytes = 0;
        std::uint64_t udp_id = 0;
        std::array<std::uint8_t, 3> route{};
        std::uint8_t nhops = 0;
        std::uint8_t hop = 0;
    };

    struct Event {
        enum class Kind : std::uint8_t { Arrival, Departure, Timer, UdpSend, TcpPace };
        std::uint64_t time = 0;
        std::uint64_t seqno = 0;
        Kind kind = Kind::Arrival;
        std::uint8_t link = 0;
        std::uint64_t timer_gen = 0;
        Packet pkt;

        static Event departure(std::uint64_t t, std::uint8_t link) {
            Event e;
            e.time = t;
            e.kind = Kind::Departure;
            e.link = link;
            return e;
        }
        static Event arrival(std::uint64_t t, std::uint8_t link, Packet&& p) {
            Event e;
            e.time = t;
            e.kind = Kind::Arrival;
            e.link = link;
            e.pkt = std::move(p);
            return e;
        }
        static Event timer(std::uint64_t t, std::uint64_t gen) {
            Event e;
            e.time = t;
            e.kind = Kind::Timer;
            e.timer_gen = gen;
            return e;
        }
        static Event udp_send(std::uint64_t t) {
            Event e;
            e.time = t;
            e.kind = Kind::UdpSend;
            return e;
        }
        static Event pace(std::uint64_t t) {
            Event e;
            e.time = t;
            e.kind = Kind::TcpPace;
            return e;
        }
    };

    struct EventAfter {
        bool operator()(const Event& a, const Event& b) const {
            if (a.time != b.time) return a.time > b.time;
            return a.seqno > b.seqno;
        }
    };

    struct DLink {
        std::uint64_t bw_bps = 0;
        std::uint64_t delay_us = 0;
        std::uint32_t cap = 0;
        std::deque<Packet> q;
        bool busy = false;
    };

    void build_links() {
        auto set = [this](std::uint8_t id, std::uint64_t bw) {
            links_[id].bw_bps = bw;
            links_[id].delay_us = cfg_.link_delay_us;
            links_[id].cap = cfg_.queue_capacity;
        };
        set(kAccessFwd, cfg_.access_bandwidth);
        set(kAccessRev, cfg_.access_bandwidth);
        set(kBottFwd, cfg_.bottleneck_bandwidth);
        set(kBottRev, cfg_.bottleneck_bandwidth);
        set(kSinkFwd, cfg_.access_bandwidth);
        set(kSinkRev, cfg_.access_bandwidth);
        set(kUdpFwd, cfg_.access_bandwidth);
        set(kUdpRev, cfg_.access_bandwidth);
    }

    // ---- event plumbing ----

    void schedule(Event ev) {
        ev.seqno = ++event_seqno_;
        heap_.push_back(std::move(ev));
        std::push_heap(heap_.begin(), heap_.end(), EventAfter{});
    }

    Event pop_event() {
        std::pop_heap(heap_.begin(), heap_.end(), EventAfter{});
        Event ev = std::move(heap_.back());
        heap_.pop_back();
        return ev;
    }

    void run_until(std::uint64_t end_us) {
        while (!heap_.empty() && heap_.front().time <= end_us) {
            Event ev = pop_event();
            if (ev.time < now_) throw std::logic_error("causality violation in event loop");
            now_ = ev.time;
            dispatch(std::move(ev));
        }
        if (heap_.empty() && now_ < end_us) throw std::runtime_error(deadlock_diagnostic(end_us));
        now_ = end_us;
    }

    std::string deadlock_diagnostic(std::uint64_t end_us) const {
        char buf[256];
        std::snprintf(buf, sizeof(buf),
                      "event queue underflow at t=%" PRIu64 "us (end %" PRIu64
                      "us): snd_una=%u snd_nxt=%u rcv_nxt=%u retransmit_queue=%zu",
                      now_, end_us, snd_->snd_una(), snd_->snd_nxt(), rcv_->tcp().rcv_nxt(),
                      snd_->retransmit_queue().size());
        return buf;
    }

    void dispatch(Event&& ev) {
        switch (ev.kind) {
            case Event::Kind::Departure: on_departure(ev.link); break;
            case Event::Kind::Arrival: on_arrival(ev.link, std::move(ev.pkt)); break;
            case Event::Kind::Timer:
                if (ev.timer_gen == timer_gen_) {
                    trace_line("T=%" PRIu64 " K=RTO", now_);
                    snd_->on_rto(now_);
                }
                break;
            case Event::Kind::UdpSend: on_udp_send(); break;
            case Event::Kind::TcpPace:
                snd_->app_data_available(cfg_.mss);
                schedule(Event::pace(now_ + pace_interval_us_));
                break;
        }
    }

    void arm_timer(std::uint64_t at) {
        ++timer_gen_;
        schedule(Event::timer(at, timer_gen_));
    }

    // ---- links ----

    void enqueue(std::uint8_t link_id, Packet&& p) {
        DLink& l = links_[link_id];
        std::uint64_t occupied = l.q.size();
        if (occupied >= l.cap) {
            on_queue_drop(link_id, p);
            return;
        }
        l.q.push_back(std::move(p));
        if (!l.busy) {
            l.busy = true;
            schedule(Event::departure(now_ + serialization_us(l.q.front().wire_bytes, l.bw_bps),
                                      link_id));
        }
    }

    void on_departure(std::uint8_t link_id) {
        DLink& l = links_[link_id];
        Packet p = std::move(l.q.front());
        l.q.pop_front();
        schedule(Event::arrival(now_ + l.delay_us, link_id, std::move(p)));
        if (!l.q.empty()) {
            schedule(Event::departure(now_ + serialization_us(l.q.front().wire_bytes, l.bw_bps),
                                      link_id));
        } else {
            l.busy = false;
        }
    }

    void on_queue_drop(std::uint8_t link_id, const Packet& p) {
        const char* kind = "U";
        switch (p.kind) {
            case Packet::Kind::TcpData:
                ++queue_drops_tcp_;
                kind = "D";
                break;
            case Packet::Kind::TcpAck:
                ++queue_drops_ack_;
                kind = "A";
                break;
            case Packet::Kind::Udp:
                ++queue_drops_udp_;
                break;
        }
        trace_line("T=%" PRIu64 " K=DROPQ link=%u kind=%s seq=%u", now_, link_id, kind,
                   p.kind == Packet::Kind::Udp ? static_cast<std::uint32_t>(p.udp_id)
                                               : p.seg.seq);
    }

    // ---- node processing ----

    void on_arrival(std::uint8_t link_id, Packet&& p) {
        std::uint8_t arrived = p.route[p.hop];
        if (arrived != link_id) throw std::logic_error("packet routed onto the wrong link");
        ++p.hop;
        if (p.hop == p.nhops) {
            deliver(link_id, std::move(p));
            return;
        }
        // Intermediate node hooks keyed by the link just traversed.
        if (p.kind == Packet::Kind::TcpData && link_id == kAccessFwd) {
            if (!process_r1_data(p)) return; // consumed (middlebox or warden drop)
        } else if (p.kind == Packet::Kind::TcpData && link_id == kBottFwd) {
            if (!process_r2_data(p)) return;
        } else if (p.kind == Packet::Kind::TcpAck && link_id == kBottRev) {
            if (cfg_.warden != WardenMode::Off) {
                warden_.observe_ack(p.seg);
                trace_line("T=%" PRIu64 " K=TAPA ack=%u", now_, p.seg.ack);
            }
            if (midss_) midss_->on_ack(p.seg);
        }
        enqueue(p.route[p.hop], std::move(p));
    }

    // R1 on the data path: steganogram-sender middlebox, then the warden tap
    // guarding the bottleneck egress. Returns false when the packet dies here.
    bool process_r1_data(Packet& p) {
        if (midss_) {
            MidResult r = midss_->on_data(p.seg);
            if (r.action == MidAction::Drop) {
                ++mid_drops_;
                trace_line("T=%" PRIu64 " K=MDROP node=R1 seq=%u", now_, p.seg.seq);
                return false;
            }
            p.seg = std::move(r.seg);
        }
        if (cfg_.warden != WardenMode::Off) {
            Warden::Verdict v = warden_.observe_data_segment(p.seg, now_);
            if (trace_) {
                Digest d = sha256(p.seg.payload->data(), p.seg.payload->size());
                trace_line("T=%" PRIu64 " K=TAPD seq=%u len=%u dig=%s carrier=%d req=%d "
                           "corr=%d verdict=%s",
                           now_, p.seg.seq, p.seg.payload_len(),
                           to_hex(Bytes(d.begin(), d.begin() + 8)).c_str(),
                           p.seg.meta.is_steg_carrier ? 1 : 0,
                           p.seg.meta.is_marked_request ? 1 : 0, p.seg.meta.corrupted ? 1 : 0,
                           v == Warden::Verdict::DetectAndDrop ? "D" : "P");
            }
            if (v == Warden::Verdict::DetectAndDrop && cfg_.warden == WardenMode::Drop) {
                ++warden_drops_;
                trace_line("T=%" PRIu64 " K=WDROP seq=%u", now_, p.seg.seq);
                return false;
            }
        }
        return true;
    }

    bool process_r2_data(Packet& p) {
        if (midsr_) {
            MidResult r = midsr_->on_data(p.seg);
            if (r.action == MidAction::Drop) {
                ++mid_drops_;
                trace_line("T=%" PRIu64 " K=MDROP node=R2 seq=%u", now_, p.seg.seq);
                return false;
            }
            p.seg = std::move(r.seg);
        }
        return true;
    }

    void deliver(std::uint8_t link_id, Packet&& p) {
        switch (p.kind) {
            case Packet::Kind::Udp:
                ++udp_delivered_;
                break;
            case Packet::Kind::TcpAck:
                if (link_id != kAccessRev) throw std::logic_error("ack delivered off-path");
                trace_line("T=%" PRIu64 " K=ACK ack=%u sacks=%zu", now_, p.seg.ack,
                           p.seg.sack_blocks.size());
                snd_->on_ack(p.seg, now_);
                break;
            case Packet::Kind::TcpData: {
                if (link_id != kSinkFwd) throw std::logic_error("data delivered off-path");
                bool ok = checksum_valid(p.seg);
                trace_line("T=%" PRIu64 " K=DLV seq=%u len=%u ok=%d", now_, p.seg.seq,
                           p.seg.payload_len(), ok ? 1 : 0);
                if (!ok) {
                    ++checksum_discards_;
                    return;
                }
                ++delivered_segments_;
                auto ack = rcv_->on_data(p.seg, now_);
                if (ack) emit_ack(std::move(*ack));
                break;
            }
        }
    }

    // ---- endpoints ----

    void on_tcp_emit(Segment&& seg) {
        if (seg.meta.is_retransmission) {
            if (registry_.contains(seg.seq))
                ++retrans_intentional_;
            else
                ++retrans_natural_;
        } else if (seg.meta.is_marked_request) {
            marked_lens_[seg.seq] = seg.payload_len();
        }
        if (on_data_sent) on_data_sent(seg);
        if (trace_) {
            const char* cause = "N";
            switch (seg.meta.cause) {
                case RetransmitCause::Timeout: cause = "T"; break;
                case RetransmitCause::FastRetransmit: cause = "F"; break;
                case RetransmitCause::SackHole: cause = "S"; break;
                case RetransmitCause::None: break;
            }
            trace_line("T=%" PRIu64 " K=SND seq=%u len=%u retx=%d cause=%s carrier=%d "
                       "req=%d",
                       now_, seg.seq, seg.payload_len(), seg.meta.is_retransmission ? 1 : 0,
                       cause, seg.meta.is_steg_carrier ? 1 : 0,
                       seg.meta.is_marked_request ? 1 : 0);
        }
        if (drop_filter && drop_filter(seg)) {
            ++injected_drops_;
            trace_line("T=%" PRIu64 " K=IDROP seq=%u", now_, seg.seq);
            return;
        }
        maybe_corrupt(seg);
        Packet p;
        p.kind = Packet::Kind::TcpData;
        p.wire_bytes = 20 + seg.wire_size(); // IP header + TCP wire image
        p.seg = std::move(seg);
        p.route = {kAccessFwd, kBottFwd, kSinkFwd};
        p.nhops = 3;
        enqueue(kAccessFwd, std::move(p));
    }

    void maybe_corrupt(Segment& seg) {
        if (cfg_.p_corrupt <= 0.0 || seg.payload_len() == 0) return;
        if (!corrupt_rng_.bernoulli(cfg_.p_corrupt)) return;
        Bytes damaged = *seg.payload;
        std::uint64_t idx = corrupt_rng_.next_below(damaged.size());
        std::uint8_t flip =
            static_cast<std::uint8_t>(1 + corrupt_rng_.next_below(255));
        damaged[idx] ^= flip;
        seg.payload = make_payload(std::move(damaged));
        seg.meta.corrupted = true; // checksum left stale on purpose
        ++corrupted_segments_;
    }

    void emit_ack(Segment&& ack) {
        ++acks_sent_;
        Packet p;
        p.kind = Packet::Kind::TcpAck;
        p.wire_bytes = 20 + ack.wire_size();
        p.seg = std::move(ack);
        p.route = {kSinkRev, kBottRev, kAccessRev};
        p.nhops = 3;
        enqueue(kSinkRev, std::move(p));
    }

    void schedule_udp(std::uint64_t at) { schedule(Event::udp_send(at)); }

    void on_udp_send() {
        Packet p;
        p.kind = Packet::Kind::Udp;
        p.wire_bytes = 28 + cfg_.udp_packet_size; // IP + UDP headers
        p.udp_id = ++udp_sent_;
        p.route = {kUdpFwd, kBottFwd, kSinkFwd};
        p.nhops = 3;
        trace_line("T=%" PRIu64 " K=UDP id=%" PRIu64, now_, p.udp_id);
        enqueue(kUdpFwd, std::move(p));
        // Constant bit rate with a +/-10% spacing jitter.
        std::uint64_t base =
            serialization_us(cfg_.udp_packet_size + 28, cfg_.udp_rate);
        double factor = 0.9 + 0.2 * jitter_rng_.next_u01();
        std::uint64_t gap = static_cast<std::uint64_t>(static_cast<double>(base) * factor);
        if (gap == 0) gap = 1;
        schedule_udp(now_ + gap);
    }

    void on_deliver(std::uint64_t off, const PayloadPtr& p) {
        if (stream_intact_) check_slice(off, *p);
        if (on_delivered) on_delivered(off, *p);
        delivered_bytes_ += p->size();
    }

    // Delivered bytes must equal the application stream except, in the
    // covert-endpoint scenarios, at the scheduled bit positions of marked
    // segments (those carry the identifying sequence by design).
    void check_slice(std::uint64_t off, const Bytes& got_in) {
        Bytes want = app_bytes(off, got_in.size());
        if (want == got_in) return;
        Bytes got = got_in;
        auto it = marked_lens_.upper_bound(static_cast<std::uint32_t>(off) + 1);
        if (it != marked_lens_.begin()) --it;
        std::uint64_t end = off + got.size();
        for (; it != marked_lens_.end() && it->first <= end; ++it) {
            std::uint32_t seq = it->first;
            std::uint32_t len = it->second;
            std::uint64_t seg_off = seq - 1; // iss = 1
            if (seg_off + len <= off || seg_off >= end) continue;
            Schedule sched = position_schedule(cfg_.sk, seq, len * 8, cfg_.embed_len);
            for (std::uint32_t bit : sched) {
                std::uint64_t abs_bit = seg_off * 8 + bit;
                if (abs_bit < off * 8 || abs_bit >= end * 8) continue;
                set_bit(want, abs_bit - off * 8, false);
                set_bit(got, abs_bit - off * 8, false);
            }
        }
        if (want != got) {
            stream_intact_ = false;
            first_mismatch_off_ = off;
        }
    }

    SimCounters gather() const {
        SimCounters c;
        const SenderCounters& s = snd_->counters();
        c.data_segments_sent = s.data_segments_sent;
        c.first_transmissions = s.first_transmissions;
        c.retransmissions = s.retransmissions;
        c.retrans_natural = retrans_natural_;
        c.retrans_intentional = retrans_intentional_;
        c.retrans_timeout = s.retrans_timeout;
        c.retrans_fast = s.retrans_fast;
        c.retrans_sack = s.retrans_sack;
        c.rto_events = s.rto_events;
        if (midsr_) {
            c.carriers_extracted = midsr_->counters().carriers_extracted;
            c.steg_bits_extracted = midsr_->extracted_bits().size();
        } else {
            c.carriers_extracted = rcv_->counters().carriers_extracted;
            c.steg_bits_extracted = rcv_->extracted_bits().size();
        }
        if (midss_) {
            c.marks_placed = midss_->counters().marks_placed;
            c.marks_resolved = midss_->counters().marks_resolved;
        } else if (ctl_) {
            c.marks_placed = ctl_->counters().marks_placed;
            c.marks_resolved = ctl_->counters().marks_resolved;
        }
        c.delivered_segments = delivered_segments_;
        c.delivered_bytes = delivered_bytes_;
        c.acks_sent = acks_sent_;
        c.checksum_discards = checksum_discards_;
        c.corrupted_segments = corrupted_segments_;
        c.queue_drops_tcp = queue_drops_tcp_;
        c.queue_drops_ack = queue_drops_ack_;
        c.queue_drops_udp = queue_drops_udp_;
        c.warden_drops = warden_drops_;
        c.mid_drops = mid_drops_;
        c.injected_drops = injected_drops_;
        c.udp_sent = udp_sent_;
        c.udp_delivered = udp_delivered_;
        return c;
    }

    void trace_line(const char* fmt, ...)
#if defined(__GNUC__)
        __attribute__((format(printf, 2, 3)))
#endif
    {
        if (!trace_) return;
        char buf[256];
        va_list ap;
        va_start(ap, fmt);
        std::vsnprintf(buf, sizeof(buf), fmt, ap);
        va_end(ap);
        *trace_ << buf << '\n';
    }

    TopologyConfig cfg_;
    StegConfig scfg_;
    MarkRegistry registry_;
    GeneratedBits steg_bits_;
    DetRng corrupt_rng_;
    DetRng jitter_rng_;
    Warden warden_;

    std::optional<StegSenderCtl> ctl_;
    std::optional<StegMiddleboxSender> midss_;
    std::optional<StegMiddleboxReceiver> midsr_;
    std::optional<TcpSender> snd_;
    std::optional<StegReceiver> rcv_;

    std::array<DLink, kNumLinks> links_{};
    std::vector<Event> heap_;
    std::uint64_t event_seqno_ = 0;
    std::uint64_t now_ = 0;
    std::uint64_t timer_gen_ = 0;
    std::uint64_t pace_interval_us_ = 0;
    bool ran_ = false;

    std::map<std::uint32_t, std::uint32_t> marked_lens_;
    bool stream_intact_ = true;
    std::uint64_t first_mismatch_off_ = 0;

    std::uint64_t retrans_natural_ = 0;
    std::uint64_t retrans_intentional_ = 0;
    std::uint64_t delivered_segments_ = 0;
    std::uint64_t delivered_bytes_ = 0;
    std::uint64_t acks_sent_ = 0;
    std::uint64_t checksum_discards_ = 0;
    std::uint64_t corrupted_segments_ = 0;
    std::uint64_t queue_drops_tcp_ = 0;
    std::uint64_t queue_drops_ack_ = 0;
    std::uint64_t queue_drops_udp_ = 0;
    std::uint64_t warden_drops_ = 0;
    std::uint64_t mid_drops_ = 0;
    std::uint64_t injected_drops_ = 0;
    std::uint64_t udp_sent_ = 0;
    std::uint64_t udp_delivered_ = 0;

    std::ostream* trace_ = nullptr;
};

} // namespace rsteg
