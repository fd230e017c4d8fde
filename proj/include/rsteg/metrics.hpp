#pragma once

// Steganographic-bandwidth and retransmission-difference metrics, bottleneck
// calibration for target retransmission rates, and the parameter sweep that
// produces the mean/stddev result tables.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsteg/netsim.hpp"

namespace rsteg {

// S_B = N_S * S_S / T, in bytes per second. N_S counts the steganogram
// carriers the covert receiver extracted during the measurement window.
inline double steganographic_bandwidth(std::uint64_t n_s, std::uint64_t s_s_bytes,
                                       double t_seconds) {
    if (t_seconds <= 0.0) throw std::invalid_argument("duration must be positive");
    return static_cast<double>(n_s) * static_cast<double>(s_s_bytes) / t_seconds;
}

// Difference of two retransmission rates in percentage points. Scaling each
// rate by 1000 before subtracting keeps common decimal inputs exact in
// binary floating point: (0.07, 0.05) -> 2.0 precisely, not 2.0000000000000004.
inline double retransmission_difference(double rate_with_rsteg, double rate_baseline) {
    return (rate_with_rsteg * 1000.0 - rate_baseline * 1000.0) / 10.0;
}

struct RunMetrics {
    std::uint64_t n_s = 0;        // steganogram carriers received
    std::uint64_t s_s_bytes = 0;  // segment payload size
    double t_seconds = 0.0;       // measurement duration
    std::uint64_t segments_sent = 0;
    std::uint64_t retrans_natural = 0;
    std::uint64_t retrans_intentional = 0;
    double s_b = 0.0;          // bytes/second
    double retrans_rate = 0.0; // fraction
};

inline RunMetrics run_metrics(const RunReport& rep) {
    RunMetrics m;
    m.n_s = rep.window.carriers_extracted;
    m.s_s_bytes = rep.segment_payload_bytes;
    m.t_seconds = rep.measure_seconds;
    m.segments_sent = rep.window.data_segments_sent;
    m.retrans_natural = rep.window.retrans_natural;
    m.retrans_intentional = rep.window.retrans_intentional;
    m.s_b = steganographic_bandwidth(m.n_s, m.s_s_bytes, m.t_seconds);
    m.retrans_rate = rep.retrans_rate();
    return m;
}

// ---- bottleneck calibration ----

struct CalibrationSettings {
    double target_nr_p = 0.03;
    double tolerance = 0.0025; // +/- 0.25 percentage points
    Mechanism mechanism = Mechanism::Frr;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::uint64_t warmup_us = 5'000'000;
    std::uint64_t measure_us = 60'000'000;
    TopologyConfig base; // topology knobs; bandwidth/mechanism/ir_p overwritten
    std::uint64_t x_lo_bps = 500'000;
    std::uint64_t x_hi_bps = 10'000'000;
    int max_iterations = 18;
};

struct CalibrationResult {
    std::uint64_t x_bps = 0;
    double achieved_nr_p = 0.0;
    int iterations = 0;
};

inline double baseline_nr_p(const CalibrationSettings& s, std::uint64_t x_bps) {
    if (s.seeds.empty()) throw std::invalid_argument("calibration needs at least one seed");
    double acc = 0.0;
    for (std::uint64_t seed : s.seeds) {
        TopologyConfig cfg = s.base;
        cfg.bottleneck_bandwidth = x_bps;
        cfg.mechanism = s.mechanism;
        cfg.ir_p = 0.0;
        cfg.seed = seed;
        Simulation sim(cfg);
        acc += sim.run(s.warmup_us, s.measure_us).retrans_rate();
    }
    return acc / static_cast<double>(s.seeds.size());
}

// Bisection over the bottleneck bandwidth: the baseline retransmission rate
// decreases as capacity grows, so f(mid) > target steers the bracket upward.
// The curve carries systematic ripples where the congestion sawtooth phase-
// locks with the cross-traffic period, so when the bisection lands beside the
// target a local fan around the final bracket retries the nearest candidates.
// Throws with a bracketing report when the target is unreachable in bounds.
inline CalibrationResult calibrate_bottleneck(const CalibrationSettings& s) {
    std::uint64_t lo = s.x_lo_bps, hi = s.x_hi_bps;
    if (lo >= hi) throw std::invalid_argument("calibration bracket is empty");
    CalibrationResult res;
    std::uint64_t best_x = 0;
    double best_f = 0.0;
    double best_err = std::numeric_limits<double>::infinity();
    auto probe = [&](std::uint64_t x) {
        double f = baseline_nr_p(s, x);
        ++res.iterations;
        double err = std::abs(f - s.target_nr_p);
        if (err < best_err) {
            best_err = err;
            best_x = x;
            best_f = f;
        }
        return f;
    };
    for (int i = 0; i < s.max_iterations && hi - lo >= 1000; ++i) {
        std::uint64_t mid = lo + (hi - lo) / 2;
        double f_mid = probe(mid);
        if (best_err <= s.tolerance) {
            res.x_bps = best_x;
            res.achieved_nr_p = best_f;
            return res;
        }
        if (f_mid > s.target_nr_p)
            lo = mid;
        else
            hi = mid;
    }
    std::uint64_t center = lo / 2 + hi / 2;
    std::uint64_t span = std::max<std::uint64_t>(center / 5, 100'000);
    for (int k = -4; k <= 4 && best_err > s.tolerance; ++k) {
        if (k == 0) continue;
        std::int64_t cand = static_cast<std::int64_t>(center) +
                            k * static_cast<std::int64_t>(span / 4);
        if (cand < static_cast<std::int64_t>(s.x_lo_bps) ||
            cand > static_cast<std::int64_t>(s.x_hi_bps))
            continue;
        probe(static_cast<std::uint64_t>(cand));
    }
    if (best_err <= s.tolerance) {
        res.x_bps = best_x;
        res.achieved_nr_p = best_f;
        return res;
    }
    std::ostringstream msg;
    msg << "calibration failed: target nr_p " << s.target_nr_p << " +/- " << s.tolerance
        << " not reached after " << res.iterations << " probes; final bracket ["
        << lo << ", " << hi << "] bps, closest rate " << best_f << " at " << best_x
        << " bps";
    throw std::runtime_error(msg.str());
}

// ---- parameter sweep ----

struct ExperimentConfig {
    std::vector<double> nr_p_targets = {0.03, 0.05};
    std::vector<Mechanism> mechanisms = {Mechanism::RtoOnly, Mechanism::Frr,
                                         Mechanism::Sack};
    std::vector<double> ir_ps = {0.005, 0.01, 0.02, 0.03, 0.04, 0.05};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::uint64_t warmup_us = 5'000'000;
    std::uint64_t measure_us = 60'000'000;
    double calibration_tolerance = 0.0025;
    TopologyConfig base; // topology knobs shared by every run
};

struct SweepRow {
    double nr_p_target = 0.0;
    Mechanism mechanism = Mechanism::Frr;
    double ir_p = 0.0;
    double sb_mean_bps = 0.0;
    double sb_std_bps = 0.0;
    double rd_mean_pct = 0.0;
    double rd_std_pct = 0.0;
    std::uint32_t n_seeds = 0;
};

namespace detail {

struct MeanStd {
    double mean = 0.0, std = 0.0;
};

// Sample standard deviation (n-1 divisor); zero for fewer than two points.
inline MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd r;
    if (xs.empty()) return r;
    double acc = 0.0;
    for (double x : xs) acc += x;
    r.mean = acc / static_cast<double>(xs.size());
    if (xs.size() < 2) return r;
    double sq = 0.0;
    for (double x : xs) sq += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(sq / static_cast<double>(xs.size() - 1));
    return r;
}

} // namespace detail

// Runs the full grid. For each (nr_p target, mechanism) the bottleneck is
// calibrated once; each seed's covert run is paired with a baseline run at
// the same seed and calibrated bandwidth, so R_D is a paired difference.
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& ec) {
    std::vector<SweepRow> rows;
    auto cell_error = [](double target, Mechanism mech, const char* stage,
                         const std::exception& e) {
        std::ostringstream msg;
        msg << "sweep cell (nr_p_target=" << target << ", mechanism="
            << mechanism_name(mech) << ", " << stage << "): " << e.what();
        return std::runtime_error(msg.str());
    };
    for (double target : ec.nr_p_targets) {
        for (Mechanism mech : ec.mechanisms) {
            CalibrationSettings cs;
            cs.target_nr_p = target;
            cs.tolerance = ec.calibration_tolerance;
            cs.mechanism = mech;
            cs.seeds = ec.seeds;
            cs.warmup_us = ec.warmup_us;
            cs.measure_us = ec.measure_us;
            cs.base = ec.base;
            CalibrationResult cal;
            try {
                cal = calibrate_bottleneck(cs);
            } catch (const std::exception& e) {
                throw cell_error(target, mech, "calibration", e);
            }

            std::map<std::uint64_t, double> baseline_rate;
            for (std::uint64_t seed : ec.seeds) {
                TopologyConfig cfg = ec.base;
                cfg.bottleneck_bandwidth = cal.x_bps;
                cfg.mechanism = mech;
                cfg.ir_p = 0.0;
                cfg.seed = seed;
                try {
                    Simulation sim(cfg);
                    baseline_rate[seed] =
                        sim.run(ec.warmup_us, ec.measure_us).retrans_rate();
                } catch (const std::exception& e) {
                    std::ostringstream stage;
                    stage << "baseline, seed=" << seed;
                    throw cell_error(target, mech, stage.str().c_str(), e);
                }
            }

            for (double ir : ec.ir_ps) {
                std::vector<double> sbs, rds;
                for (std::uint64_t seed : ec.seeds) {
                    TopologyConfig cfg = ec.base;
                    cfg.bottleneck_bandwidth = cal.x_bps;
                    cfg.mechanism = mech;
                    cfg.ir_p = ir;
                    cfg.seed = seed;
                    try {
                        Simulation sim(cfg);
                        RunReport rep = sim.run(ec.warmup_us, ec.measure_us);
                        RunMetrics m = run_metrics(rep);
                        sbs.push_back(m.s_b);
                        rds.push_back(retransmission_difference(m.retrans_rate,
                                                                baseline_rate[seed]));
                    } catch (const std::exception& e) {
                        std::ostringstream stage;
                        stage << "ir_p=" << ir << ", seed=" << seed;
                        throw cell_error(target, mech, stage.str().c_str(), e);
                    }
                }
                auto sb = detail::mean_std(sbs);
                auto rd = detail::mean_std(rds);
                SweepRow row;
                row.nr_p_target = target;
                row.mechanism = mech;
                row.ir_p = ir;
                row.sb_mean_bps = sb.mean;
                row.sb_std_bps = sb.std;
                row.rd_mean_pct = rd.mean;
                row.rd_std_pct = rd.std;
                row.n_seeds = static_cast<std::uint32_t>(ec.seeds.size());
                rows.push_back(row);
            }
        }
    }
    return rows;
}

// Shortest decimal that round-trips the exact double, so rerunning the sweep
// reproduces the CSV byte for byte.
inline std::string format_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::logic_error("double formatting failed");
    return std::string(buf, end);
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << "nr_p_target,mechanism,ir_p,sb_mean_bps,sb_std_bps,rd_mean_pct,rd_std_pct,"
          "n_seeds\n";
    for (const auto& r : rows) {
        os << format_double(r.nr_p_target) << ',' << mechanism_name(r.mechanism) << ','
           << format_double(r.ir_p) << ',' << format_double(r.sb_mean_bps) << ','
           << format_double(r.sb_std_bps) << ',' << format_double(r.rd_mean_pct) << ','
           << format_double(r.rd_std_pct) << ',' << r.n_seeds << '\n';
    }
}

} // namespace rsteg
