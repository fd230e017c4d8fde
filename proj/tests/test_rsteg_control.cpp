#include <catch2/catch_amalgamated.hpp>

#include <deque>
#include <functional>
#include <map>

#include "rsteg/rsteg_control.hpp"

using namespace rsteg;

namespace {

TcpConfig make_cfg(Mechanism mech) {
    TcpConfig cfg;
    cfg.conn_id = 1;
    cfg.mss = 1000;
    cfg.rwnd = 64000;
    cfg.iss = 1;
    cfg.mechanism = mech;
    return cfg;
}

StegConfig make_scfg(double ir_p, int scenario) {
    StegConfig cfg;
    cfg.ir_p = ir_p;
    cfg.scenario = scenario;
    return cfg;
}

Segment plain_data_seg(std::uint32_t seq, std::uint32_t len) {
    Segment s;
    s.conn_id = 1;
    s.seq = seq;
    s.ack = 1;
    s.window = 64000;
    s.payload = make_payload(app_bytes(seq - 1, len));
    finalize_checksum(s);
    return s;
}

// Number of mismatches between an extracted bit stream and the source's
// position-addressed pattern; avoids one assertion per bit.
std::size_t prefix_mismatches(const std::vector<bool>& got, const StegBitSource& src) {
    std::size_t bad = 0;
    for (std::size_t i = 0; i < got.size(); ++i)
        if (got[i] != src.bit_at(i)) ++bad;
    return bad;
}

// Zero the scheduled bits of every marked segment in both streams, then
// compare: the only bytes a covert endpoint receiver may see changed.
void require_equal_outside_marks(const Bytes& delivered, std::uint64_t total,
                                 const StegKey& sk,
                                 const std::map<std::uint32_t, std::uint32_t>& marked_lens) {
    REQUIRE(delivered.size() == total);
    Bytes expect = app_bytes(0, total);
    Bytes got = delivered;
    for (auto [seq, len] : marked_lens) {
        Schedule sched = position_schedule(sk, seq, len * 8, 128);
        for (std::uint32_t off : sched) {
            std::uint64_t bit = (seq - 1) * 8ull + off;
            set_bit(expect, bit, false);
            set_bit(got, bit, false);
        }
    }
    REQUIRE(got == expect);
}

} // namespace

TEST_CASE("generated bit source is position addressable and consistent", "[rsteg]") {
    GeneratedBits a(42), b(42), c(43);
    std::vector<bool> taken;
    a.take(1000, taken);
    std::size_t bad = 0, same = 0;
    for (std::size_t i = 0; i < 1000; ++i) {
        if (taken[i] != b.bit_at(i)) ++bad;
        if (taken[i] == c.bit_at(i)) ++same;
    }
    CHECK(bad == 0);
    CHECK(same < 1000); // different seed gives a different stream
    CHECK(a.taken() == 1000);
    std::vector<bool> more;
    a.take(8, more);
    for (int i = 0; i < 8; ++i) CHECK(more[i] == b.bit_at(1000 + i));
}

TEST_CASE("buffer bit source exposes bytes msb first and bounds taking", "[rsteg]") {
    BufferBits src(Bytes{0xA5, 0x01});
    CHECK(src.available() == 16);
    std::vector<bool> bits;
    src.take(16, bits);
    std::vector<bool> want{true, false, true, false, false, true, false, true,
                           false, false, false, false, false, false, false, true};
    CHECK(bits == want);
    CHECK(src.available() == 0);
    CHECK_THROWS_AS(src.take(1, bits), std::logic_error);
    CHECK(pack_bits(want) == Bytes{0xA5, 0x01});
}

TEST_CASE("masked checksum ignores scheduled bits and covers the rest", "[rsteg]") {
    Segment seg = plain_data_seg(5001, 1000);
    Schedule sched = position_schedule(StegConfig{}.sk, 5001, 8000, 128);
    std::uint16_t base = masked_checksum(seg, sched);

    Bytes flipped = *seg.payload;
    for (std::uint32_t off : sched) set_bit(flipped, off, !get_bit(flipped, off));
    Segment seg2 = seg;
    seg2.payload = make_payload(std::move(flipped));
    CHECK(masked_checksum(seg2, sched) == base);

    // Flip one bit outside the schedule.
    std::uint32_t off = 0;
    while (std::find(sched.begin(), sched.end(), off) != sched.end()) ++off;
    Bytes other = *seg.payload;
    set_bit(other, off, !get_bit(other, off));
    Segment seg3 = seg;
    seg3.payload = make_payload(std::move(other));
    CHECK(masked_checksum(seg3, sched) != base);
}

TEST_CASE("marking frequency follows the configured probability", "[rsteg]") {
    StegConfig scfg = make_scfg(0.01, 1);
    GeneratedBits bits(7);
    MarkRegistry reg;
    StegSenderCtl ctl(scfg, &bits, &reg, 99);
    int marks = 0;
    const int n = 100'000;
    for (int i = 0; i < n; ++i) {
        Segment seg = plain_data_seg(1 + static_cast<std::uint32_t>(i) * 1000u, 1000);
        ctl.on_first_transmission(seg);
        if (seg.meta.is_marked_request) {
            ++marks;
            ctl.on_cumulative_ack(seg.seq + 1000);
        }
    }
    // Binomial(1e5, 0.01): mean 1000, sd ~31.5; accept within 3 sd.
    CHECK(marks > 905);
    CHECK(marks < 1095);
    CHECK(reg.seqs.size() == static_cast<std::size_t>(marks));
}

TEST_CASE("zero probability places no marks and draws no randomness", "[rsteg]") {
    StegConfig scfg = make_scfg(0.0, 1);
    GeneratedBits bits(7);
    MarkRegistry reg;
    StegSenderCtl ctl(scfg, &bits, &reg, 99);
    for (int i = 0; i < 1000; ++i) {
        Segment seg = plain_data_seg(1 + static_cast<std::uint32_t>(i) * 1000u, 1000);
        ctl.on_first_transmission(seg);
        REQUIRE_FALSE(seg.meta.is_marked_request);
    }
    CHECK(bits.taken() == 0);
    CHECK(ctl.counters().marks_placed == 0);
}

TEST_CASE("only one mark is outstanding at a time", "[rsteg]") {
    StegConfig scfg = make_scfg(1.0, 1);
    GeneratedBits bits(7);
    MarkRegistry reg;
    StegSenderCtl ctl(scfg, &bits, &reg, 99);
    Segment a = plain_data_seg(1, 1000);
    Segment b = plain_data_seg(1001, 1000);
    ctl.on_first_transmission(a);
    ctl.on_first_transmission(b);
    CHECK(a.meta.is_marked_request);
    CHECK_FALSE(b.meta.is_marked_request);
    ctl.on_cumulative_ack(2001);
    Segment c = plain_data_seg(2001, 1000);
    ctl.on_first_transmission(c);
    CHECK(c.meta.is_marked_request);
}

TEST_CASE("segments too short to hold the identifying sequence pass untouched", "[rsteg]") {
    StegConfig scfg = make_scfg(1.0, 1);
    GeneratedBits bits(7);
    MarkRegistry reg;
    StegSenderCtl ctl(scfg, &bits, &reg, 99);
    Segment tiny = plain_data_seg(1, 15); // 120 bits < 128
    ctl.on_first_transmission(tiny);
    CHECK_FALSE(tiny.meta.is_marked_request);
    Segment fits = plain_data_seg(16, 16);
    ctl.on_first_transmission(fits);
    CHECK(fits.meta.is_marked_request);
}

namespace {

// Closed loop for the covert-endpoint scenarios: steg sender hook on the TCP
// sender, steg receiver emitting (possibly suppressed) acknowledgments.
struct StegLoop {
    std::uint64_t now = 0;
    bool timer_armed = false;
    std::uint64_t timer_at = 0;
    std::deque<Segment> to_receiver;
    std::deque<Segment> to_sender;
    std::function<bool(const Segment&)> drop;
    std::function<void(const Segment&)> tap; // observes every sent data segment
    Bytes delivered;
    std::map<std::uint32_t, std::uint32_t> marked_lens;
    MarkRegistry registry;
    GeneratedBits bits;
    StegConfig scfg;
    StegSenderCtl ctl;
    TcpSender snd;
    StegReceiver rcv;

    StegLoop(Mechanism mech, double ir_p, std::uint64_t bits_seed = 77)
        : bits(bits_seed),
          scfg(make_scfg(ir_p, 1)),
          ctl(scfg, &bits, &registry, 12345),
          snd(make_cfg(mech),
              SenderEnv{
                  [this] { return now; },
                  [this](Segment&& s) { to_receiver.push_back(std::move(s)); },
                  [this](std::uint64_t t) { timer_armed = true; timer_at = t; },
                  [this] { timer_armed = false; },
                  [](std::uint64_t off, std::uint32_t len, Bytes& out) {
                      out = app_bytes(off, len);
                  }},
              &ctl),
          rcv(make_cfg(mech), scfg, [this](std::uint64_t off, const PayloadPtr& p) {
              REQUIRE(off == delivered.size());
              delivered.insert(delivered.end(), p->begin(), p->end());
          }) {}

    void pump_round() {
        now += 10'000;
        std::deque<Segment> batch;
        batch.swap(to_receiver);
        for (auto& seg : batch) {
            if (seg.meta.is_marked_request && !seg.meta.is_retransmission)
                marked_lens[seg.seq] = seg.payload_len();
            if (tap) tap(seg);
            if (drop && drop(seg)) continue;
            REQUIRE(checksum_valid(seg));
            auto ack = rcv.on_data(seg, now);
            if (!ack) continue;
            if (rcv.has_pending_mark()) {
                // Acknowledgment ceiling: never cover a pending mark, never
                // advertise its range.
                std::uint32_t ps = rcv.pending_seq();
                std::uint32_t pl = rcv.pending_len();
                REQUIRE(ack->ack <= ps);
                for (const auto& b : ack->sack_blocks) {
                    bool outside = b.right <= ps || b.left >= ps + pl;
                    REQUIRE(outside);
                }
            }
            to_sender.push_back(std::move(*ack));
        }
        now += 10'000;
        std::deque<Segment> acks;
        acks.swap(to_sender);
        for (auto& a : acks) {
            REQUIRE(checksum_valid(a, true));
            snd.on_ack(a, now);
        }
    }

    void fire_timer_if_idle() {
        if (to_receiver.empty() && to_sender.empty() && timer_armed) {
            now = std::max(now, timer_at);
            snd.on_rto(now);
        }
    }

    void run_until_complete(std::uint64_t app_bytes_total, int max_rounds = 2000) {
        snd.app_data_available(static_cast<std::uint32_t>(app_bytes_total));
        for (int i = 0; i < max_rounds; ++i) {
            if (delivered.size() == app_bytes_total && snd.snd_una() == snd.snd_nxt()) return;
            pump_round();
            fire_timer_if_idle();
        }
        FAIL("transfer did not complete");
    }

    void check_steganogram_integrity() {
        CHECK(ctl.counters().marks_placed == ctl.counters().marks_resolved);
        CHECK_FALSE(ctl.has_outstanding());
        CHECK(rcv.counters().carriers_extracted == registry.seqs.size());
        REQUIRE(rcv.extracted_bits().size() == bits.taken());
        CHECK(prefix_mismatches(rcv.extracted_bits(), bits) == 0);
    }
};

} // namespace

TEST_CASE("covert endpoints exchange steganograms over fast retransmissions", "[rsteg]") {
    StegLoop loop(Mechanism::Frr, 0.05);
    loop.run_until_complete(100'000);
    REQUIRE(loop.ctl.counters().marks_placed > 0);
    loop.check_steganogram_integrity();
    require_equal_outside_marks(loop.delivered, 100'000, loop.scfg.sk, loop.marked_lens);
    // Every mark produced at least one retransmission.
    CHECK(loop.snd.counters().retransmissions >= loop.ctl.counters().marks_placed);
}

TEST_CASE("covert endpoints exchange steganograms under timeout-only loss recovery",
          "[rsteg]") {
    StegLoop loop(Mechanism::RtoOnly, 0.05);
    loop.run_until_complete(40'000);
    REQUIRE(loop.ctl.counters().marks_placed > 0);
    loop.check_steganogram_integrity();
    require_equal_outside_marks(loop.delivered, 40'000, loop.scfg.sk, loop.marked_lens);
    CHECK(loop.rcv.counters().acks_suppressed >= loop.ctl.counters().marks_placed);
    CHECK(loop.snd.counters().retrans_timeout >= loop.ctl.counters().marks_placed);
}

TEST_CASE("covert endpoints exchange steganograms under selective acknowledgment",
          "[rsteg]") {
    StegLoop loop(Mechanism::Sack, 0.05);
    loop.run_until_complete(100'000);
    REQUIRE(loop.ctl.counters().marks_placed > 0);
    loop.check_steganogram_integrity();
    require_equal_outside_marks(loop.delivered, 100'000, loop.scfg.sk, loop.marked_lens);
    CHECK(loop.snd.counters().retrans_sack >= loop.ctl.counters().marks_placed);
}

TEST_CASE("retransmission payloads alternate carrier then user data", "[rsteg]") {
    StegLoop loop(Mechanism::Frr, 1.0);
    std::uint32_t mark_seq = 0;
    Bytes first_tx_payload;
    std::vector<Segment> retx;
    bool dropped_carrier = false;
    loop.tap = [&](const Segment& s) {
        if (mark_seq == 0 && s.meta.is_marked_request && !s.meta.is_retransmission) {
            mark_seq = s.seq;
            first_tx_payload = *s.payload;
        }
        if (mark_seq != 0 && s.seq == mark_seq && s.meta.is_retransmission)
            retx.push_back(s);
    };
    loop.drop = [&](const Segment& s) {
        if (s.meta.is_steg_carrier && s.seq == mark_seq && !dropped_carrier) {
            dropped_carrier = true;
            return true;
        }
        return false;
    };
    loop.run_until_complete(30'000);
    REQUIRE(mark_seq != 0);
    REQUIRE(retx.size() >= 3);
    CHECK(retx[0].meta.is_steg_carrier);
    CHECK_FALSE(retx[1].meta.is_steg_carrier);
    CHECK(*retx[1].payload == first_tx_payload); // user-data turn resends the marked bytes
    CHECK(retx[2].meta.is_steg_carrier);
    CHECK(*retx[2].payload == *retx[0].payload); // carrier copies are byte-identical
    CHECK(loop.rcv.counters().anomalies >= 1);   // duplicate mark seen while pending
    loop.check_steganogram_integrity();
}

TEST_CASE("steganogram survives the loss of the marked transmission itself", "[rsteg]") {
    StegLoop loop(Mechanism::Frr, 1.0);
    bool dropped = false;
    loop.drop = [&](const Segment& s) {
        if (s.meta.is_marked_request && !s.meta.is_retransmission && !dropped) {
            dropped = true;
            return true;
        }
        return false;
    };
    loop.run_until_complete(30'000);
    REQUIRE(dropped);
    CHECK(loop.rcv.counters().unexpected_steg >= 1);
    loop.check_steganogram_integrity();
    require_equal_outside_marks(loop.delivered, 30'000, loop.scfg.sk, loop.marked_lens);
}

TEST_CASE("steganogram prefix integrity holds under random loss", "[rsteg]") {
    for (auto mech : {Mechanism::RtoOnly, Mechanism::Frr, Mechanism::Sack}) {
        StegLoop loop(mech, 0.05, 31337);
        DetRng loss(2024);
        loop.drop = [&](const Segment&) { return loss.bernoulli(0.05); };
        loop.run_until_complete(60'000);
        loop.check_steganogram_integrity();
        require_equal_outside_marks(loop.delivered, 60'000, loop.scfg.sk, loop.marked_lens);
    }
}

namespace {

// Scenario 2: covert endpoint sender, steganogram-receiver middlebox in front
// of an ordinary endpoint receiver.
struct Sc2Loop {
    std::uint64_t now = 0;
    bool timer_armed = false;
    std::uint64_t timer_at = 0;
    std::deque<Segment> to_receiver;
    std::deque<Segment> to_sender;
    std::function<bool(const Segment&)> drop; // applied before the middlebox
    Bytes delivered;
    MarkRegistry registry;
    GeneratedBits bits;
    StegConfig scfg;
    StegSenderCtl ctl;
    TcpSender snd;
    StegMiddleboxReceiver mid;
    StegReceiver rcv;

    explicit Sc2Loop(Mechanism mech, double ir_p)
        : bits(909),
          scfg(make_scfg(ir_p, 2)),
          ctl(scfg, &bits, &registry, 4242),
          snd(make_cfg(mech),
              SenderEnv{
                  [this] { return now; },
                  [this](Segment&& s) { to_receiver.push_back(std::move(s)); },
                  [this](std::uint64_t t) { timer_armed = true; timer_at = t; },
                  [this] { timer_armed = false; },
                  [](std::uint64_t off, std::uint32_t len, Bytes& out) {
                      out = app_bytes(off, len);
                  }},
              &ctl),
          mid(scfg),
          rcv(make_cfg(mech), scfg, [this](std::uint64_t off, const PayloadPtr& p) {
              REQUIRE(off == delivered.size());
              delivered.insert(delivered.end(), p->begin(), p->end());
          }) {
        rcv.disable_steg(); // ordinary endpoint behind the middlebox
    }

    void pump_round() {
        now += 10'000;
        std::deque<Segment> batch;
        batch.swap(to_receiver);
        for (auto& seg : batch) {
            if (drop && drop(seg)) continue;
            REQUIRE(checksum_valid(seg));
            MidResult r = mid.on_data(seg);
            if (r.action == MidAction::Drop) continue;
            REQUIRE(checksum_valid(r.seg));
            auto ack = rcv.on_data(r.seg, now);
            if (ack) to_sender.push_back(std::move(*ack));
        }
        now += 10'000;
        std::deque<Segment> acks;
        acks.swap(to_sender);
        for (auto& a : acks) snd.on_ack(a, now);
    }

    void fire_timer_if_idle() {
        if (to_receiver.empty() && to_sender.empty() && timer_armed) {
            now = std::max(now, timer_at);
            snd.on_rto(now);
        }
    }

    void run_until_complete(std::uint64_t total, int max_rounds = 2000) {
        snd.app_data_available(static_cast<std::uint32_t>(total));
        for (int i = 0; i < max_rounds; ++i) {
            if (delivered.size() == total && snd.snd_una() == snd.snd_nxt()) return;
            pump_round();
            fire_timer_if_idle();
        }
        FAIL("transfer did not complete");
    }
};

} // namespace

TEST_CASE("receiver-side middlebox restores user data byte for byte", "[rsteg]") {
    for (auto mech : {Mechanism::RtoOnly, Mechanism::Frr, Mechanism::Sack}) {
        Sc2Loop loop(mech, 0.1);
        loop.run_until_complete(60'000);
        REQUIRE(loop.ctl.counters().marks_placed > 0);
        // The ordinary endpoint sees the pristine application stream.
        CHECK(loop.delivered == app_bytes(0, 60'000));
        CHECK(loop.mid.counters().restored_forwards == loop.registry.seqs.size());
        REQUIRE(loop.mid.extracted_bits().size() == loop.bits.taken());
        CHECK(prefix_mismatches(loop.mid.extracted_bits(), loop.bits) == 0);
        CHECK(loop.ctl.counters().marks_resolved == loop.ctl.counters().marks_placed);
    }
}

TEST_CASE("restoration layout reserves displaced bits ahead of the steganogram",
          "[rsteg]") {
    StegConfig sc2 = make_scfg(0.1, 2);
    StegConfig sc1 = make_scfg(0.1, 1);
    CHECK(sc2.restoration());
    CHECK_FALSE(sc1.restoration());
    CHECK(sc1.steg_bits_per_carrier(1000) == 8000 - 128);
    CHECK(sc2.steg_bits_per_carrier(1000) == 8000 - 256);
    CHECK(sc2.steg_bits_per_carrier(16) == 0);
}

TEST_CASE("middlebox recovers when the marked transmission never reaches it", "[rsteg]") {
    Sc2Loop loop(Mechanism::Frr, 1.0);
    bool dropped = false;
    loop.drop = [&](const Segment& s) {
        if (s.meta.is_marked_request && !s.meta.is_retransmission && !dropped) {
            dropped = true;
            return true;
        }
        return false;
    };
    loop.run_until_complete(20'000);
    REQUIRE(dropped);
    CHECK(loop.mid.counters().anomalies >= 1);
    CHECK(loop.delivered == app_bytes(0, 20'000));
    REQUIRE(loop.mid.extracted_bits().size() == loop.bits.taken());
    CHECK(prefix_mismatches(loop.mid.extracted_bits(), loop.bits) == 0);
}

namespace {

// Scenario 3: plain sender, steganogram-sender middlebox on its router,
// covert endpoint receiver. Scenario 4 adds the receiver-side middlebox and
// an ordinary endpoint receiver instead.
struct MidLoop {
    std::uint64_t now = 0;
    bool timer_armed = false;
    std::uint64_t timer_at = 0;
    std::deque<Segment> to_receiver;
    std::deque<Segment> to_sender;
    Bytes delivered;
    MarkRegistry registry;
    GeneratedBits bits;
    StegConfig scfg;
    TcpSender snd;
    StegMiddleboxSender midss;
    std::optional<StegMiddleboxReceiver> midsr;
    StegReceiver rcv;

    MidLoop(Mechanism mech, double ir_p, int scenario)
        : bits(1717),
          scfg(make_scfg(ir_p, scenario)),
          snd(make_cfg(mech),
              SenderEnv{
                  [this] { return now; },
                  [this](Segment&& s) { to_receiver.push_back(std::move(s)); },
                  [this](std::uint64_t t) { timer_armed = true; timer_at = t; },
                  [this] { timer_armed = false; },
                  [](std::uint64_t off, std::uint32_t len, Bytes& out) {
                      out = app_bytes(off, len);
                  }}),
          midss(scfg, &bits, &registry, 5150),
          rcv(make_cfg(mech), scfg, [this](std::uint64_t off, const PayloadPtr& p) {
              REQUIRE(off == delivered.size());
              delivered.insert(delivered.end(), p->begin(), p->end());
          }) {
        if (scenario == 4) {
            midsr.emplace(scfg);
            rcv.disable_steg();
        }
    }

    void pump_round() {
        now += 10'000;
        std::deque<Segment> batch;
        batch.swap(to_receiver);
        for (auto& seg : batch) {
            REQUIRE(checksum_valid(seg));
            MidResult r1 = midss.on_data(seg);
            if (r1.action == MidAction::Drop) continue;
            REQUIRE(checksum_valid(r1.seg));
            Segment onward = std::move(r1.seg);
            if (midsr) {
                MidResult r2 = midsr->on_data(onward);
                if (r2.action == MidAction::Drop) continue;
                REQUIRE(checksum_valid(r2.seg));
                onward = std::move(r2.seg);
            }
            auto ack = rcv.on_data(onward, now);
            if (ack) to_sender.push_back(std::move(*ack));
        }
        now += 10'000;
        std::deque<Segment> acks;
        acks.swap(to_sender);
        for (auto& a : acks) {
            midss.on_ack(a);
            snd.on_ack(a, now);
        }
    }

    void fire_timer_if_idle() {
        if (to_receiver.empty() && to_sender.empty() && timer_armed) {
            now = std::max(now, timer_at);
            snd.on_rto(now);
        }
    }

    void run_until_complete(std::uint64_t total, int max_rounds = 2000) {
        snd.app_data_available(static_cast<std::uint32_t>(total));
        for (int i = 0; i < max_rounds; ++i) {
            if (delivered.size() == total && snd.snd_una() == snd.snd_nxt()) return;
            pump_round();
            fire_timer_if_idle();
        }
        FAIL("transfer did not complete");
    }
};

} // namespace

TEST_CASE("sender-side middlebox injects steganograms past a plain sender", "[rsteg]") {
    for (auto mech : {Mechanism::RtoOnly, Mechanism::Frr, Mechanism::Sack}) {
        MidLoop loop(mech, 0.1, 3);
        loop.run_until_complete(60'000);
        REQUIRE(loop.midss.counters().marks_placed > 0);
        // Plain sender retransmits pristine data, so delivery is exact.
        CHECK(loop.delivered == app_bytes(0, 60'000));
        CHECK(loop.midss.counters().marks_resolved == loop.midss.counters().marks_placed);
        REQUIRE(loop.rcv.extracted_bits().size() == loop.bits.taken());
        CHECK(prefix_mismatches(loop.rcv.extracted_bits(), loop.bits) == 0);
        CHECK(loop.rcv.counters().unexpected_steg == loop.registry.seqs.size());
    }
}

TEST_CASE("paired middleboxes relay steganograms between oblivious endpoints", "[rsteg]") {
    for (auto mech : {Mechanism::RtoOnly, Mechanism::Frr, Mechanism::Sack}) {
        MidLoop loop(mech, 0.1, 4);
        loop.run_until_complete(60'000);
        REQUIRE(loop.midss.counters().marks_placed > 0);
        CHECK(loop.delivered == app_bytes(0, 60'000));
        CHECK(loop.midss.counters().marks_resolved == loop.midss.counters().marks_placed);
        REQUIRE(loop.midsr->extracted_bits().size() == loop.bits.taken());
        CHECK(prefix_mismatches(loop.midsr->extracted_bits(), loop.bits) == 0);
        CHECK(loop.midsr->counters().marks_stored >= loop.registry.seqs.size());
        CHECK(loop.midsr->counters().restored_forwards == loop.registry.seqs.size());
    }
}
