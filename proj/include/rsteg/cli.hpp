#pragma once

// Command-line front end: subcommand dispatch, config file + flag override
// merging, deterministic seeding, and text/CSV/trace emission. Lives in a
// header so the test suite can drive it in-process; the binary in tools/ is
// a two-line wrapper.

#include <fstream>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "rsteg/config.hpp"
#include "rsteg/metrics.hpp"
#include "rsteg/netsim.hpp"
#include "rsteg/warden.hpp"

namespace rsteg {

namespace detail {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<double> ir_p;
    std::string mechanism; // empty: none
    std::optional<double> nr_p;
    std::string out_path;  // empty: none
};

inline ExperimentConfig load_config(const std::string& path,
                                    std::set<std::string>* seen_keys) {
    if (path.empty()) {
        std::istringstream empty;
        return parse_config(empty, seen_keys);
    }
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config(in, seen_keys);
}

inline void check_fraction_flag(const char* name, double v) {
    if (v < 0.0 || v > 1.0)
        throw ConfigError(std::string(name) + ": '" + format_double(v) +
                          "' out of range; units are fractions in [0,1]");
}

// Applies the shared override flags onto a parsed config.
inline void apply_overrides(ExperimentConfig& ec, const Overrides& ov) {
    if (ov.seed) {
        ec.base.seed = *ov.seed;
        ec.seeds = {*ov.seed};
    }
    if (ov.ir_p) {
        check_fraction_flag("--ir-p", *ov.ir_p);
        ec.base.ir_p = *ov.ir_p;
        ec.ir_ps = {*ov.ir_p};
    }
    if (!ov.mechanism.empty()) {
        Mechanism m = parse_mechanism("--mechanism", ov.mechanism);
        ec.base.mechanism = m;
        ec.mechanisms = {m};
    }
    if (ov.nr_p) {
        check_fraction_flag("--nr-p", *ov.nr_p);
        ec.nr_p_targets = {*ov.nr_p};
    }
}

inline void print_warden_block(std::ostream& os, const Warden::Report& r) {
    os << "warden_observed_data=" << r.observed_data << '\n'
       << "warden_observed_acks=" << r.observed_acks << '\n'
       << "warden_retrans_seen=" << r.retrans_seen << '\n'
       << "warden_detections=" << r.detections << '\n'
       << "warden_true_positives=" << r.true_positives << '\n'
       << "warden_false_positives=" << r.false_positives << '\n'
       << "warden_evictions=" << r.evictions << '\n'
       << "warden_peak_entries=" << r.peak_entries << '\n'
       << "warden_peak_bytes=" << r.peak_bytes << '\n';
}

inline int cmd_run(const ExperimentConfig& ec, const Overrides& ov, bool seed_known,
                   std::ostream& out) {
    TopologyConfig cfg = ec.base;
    if (!seed_known) {
        std::random_device rd;
        cfg.seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    }
    cfg.validate();
    Simulation sim(cfg);
    std::ofstream trace;
    if (!ov.out_path.empty()) {
        trace.open(ov.out_path);
        if (!trace) throw std::runtime_error("cannot open trace output '" + ov.out_path + "'");
        sim.set_trace(&trace);
    }
    RunReport rep = sim.run(ec.warmup_us, ec.measure_us);
    RunMetrics m = run_metrics(rep);
    out << "seed=" << cfg.seed << '\n'
        << "mechanism=" << mechanism_name(cfg.mechanism) << '\n'
        << "scenario=" << cfg.scenario << '\n'
        << "ir_p=" << format_double(cfg.ir_p) << '\n'
        << "n_s=" << m.n_s << '\n'
        << "s_s_bytes=" << m.s_s_bytes << '\n'
        << "t_seconds=" << format_double(m.t_seconds) << '\n'
        << "s_b_bps=" << format_double(m.s_b) << '\n'
        << "segments_sent=" << m.segments_sent << '\n'
        << "retrans_natural=" << m.retrans_natural << '\n'
        << "retrans_intentional=" << m.retrans_intentional << '\n'
        << "retrans_rate=" << format_double(m.retrans_rate) << '\n'
        << "stream_intact=" << (rep.stream_intact ? 1 : 0) << '\n';
    if (cfg.warden != WardenMode::Off) print_warden_block(out, rep.warden);
    return 0;
}

inline int cmd_calibrate(const ExperimentConfig& ec, const Overrides& ov,
                         std::ostream& out) {
    std::ofstream file;
    std::ostream* dst = &out;
    if (!ov.out_path.empty()) {
        file.open(ov.out_path);
        if (!file) throw std::runtime_error("cannot open output '" + ov.out_path + "'");
        dst = &file;
    }
    for (Mechanism mech : ec.mechanisms) {
        for (double target : ec.nr_p_targets) {
            CalibrationSettings cs;
            cs.target_nr_p = target;
            cs.tolerance = ec.calibration_tolerance;
            cs.mechanism = mech;
            cs.seeds = ec.seeds;
            cs.warmup_us = ec.warmup_us;
            cs.measure_us = ec.measure_us;
            cs.base = ec.base;
            CalibrationResult res = calibrate_bottleneck(cs);
            *dst << "mechanism=" << mechanism_name(mech)
                 << " target=" << format_double(target) << " x_bps=" << res.x_bps
                 << " achieved_nr_p=" << format_double(res.achieved_nr_p)
                 << " probes=" << res.iterations << '\n';
        }
    }
    return 0;
}

inline int cmd_sweep(const ExperimentConfig& ec, const Overrides& ov,
                     std::ostream& out) {
    auto rows = run_sweep(ec);
    if (ov.out_path.empty()) {
        write_sweep_csv(out, rows);
        return 0;
    }
    std::ofstream file(ov.out_path);
    if (!file) throw std::runtime_error("cannot open output '" + ov.out_path + "'");
    write_sweep_csv(file, rows);
    return 0;
}

inline int cmd_warden_analyze(const std::string& trace_path, double factor,
                              const Overrides& ov, std::ostream& out) {
    std::ifstream in(trace_path);
    if (!in) throw ConfigError("cannot open trace file '" + trace_path + "'");
    Warden warden;
    ReplayStats stats = replay_trace(in, warden);
    std::ofstream file;
    std::ostream* dst = &out;
    if (!ov.out_path.empty()) {
        file.open(ov.out_path);
        if (!file) throw std::runtime_error("cannot open output '" + ov.out_path + "'");
        dst = &file;
    }
    *dst << "data_lines=" << stats.data_lines << '\n'
         << "ack_lines=" << stats.ack_lines << '\n'
         << "ignored_lines=" << stats.ignored_lines << '\n';
    print_warden_block(*dst, warden.report());
    *dst << "stored_entries=" << warden.stored_entries() << '\n';
    auto rates = warden.connection_rates(factor);
    *dst << "conn,rate,flagged\n";
    for (const auto& cr : rates)
        *dst << cr.conn << ',' << format_double(cr.rate) << ',' << (cr.flagged ? 1 : 0)
             << '\n';
    return 0;
}

} // namespace detail

// Parses argv and executes one subcommand. Returns the process exit status:
// 0 on success, 2 for configuration problems, 1 for runtime failures. All
// error paths write a single line to `err`.
inline int run_cli(int argc, const char* const* argv, std::ostream& out,
                   std::ostream& err) {
    CLI::App app{"RSTEG retransmission-steganography simulator"};
    app.require_subcommand(1);

    std::string config_path;
    detail::Overrides ov;
    double ov_ir_p = -1.0, ov_nr_p = -1.0;
    std::uint64_t ov_seed = 0;
    std::string trace_path;
    double factor = 2.0;

    auto add_common = [&](CLI::App* cmd, bool with_nr_p, bool with_ir_p) {
        cmd->add_option("--config", config_path, "flat key=value config file");
        cmd->add_option("--seed", ov_seed, "override the RNG seed");
        cmd->add_option("--mechanism", ov.mechanism,
                        "override the retransmission mechanism (RTO|FRR|SACK)");
        cmd->add_option("--out", ov.out_path, "output file path");
        if (with_ir_p)
            cmd->add_option("--ir-p", ov_ir_p,
                            "override the intentional retransmission probability "
                            "(fraction in [0,1])");
        if (with_nr_p)
            cmd->add_option("--nr-p", ov_nr_p,
                            "override the target natural retransmission rate "
                            "(fraction in [0,1])");
    };

    CLI::App* c_run = app.add_subcommand(
        "run", "run one simulation and print its metrics; --out writes the event trace");
    add_common(c_run, false, true);
    CLI::App* c_cal = app.add_subcommand(
        "calibrate", "find bottleneck bandwidths for the target retransmission rates");
    add_common(c_cal, true, false);
    CLI::App* c_sweep = app.add_subcommand(
        "sweep", "run the full parameter grid and write the results CSV");
    add_common(c_sweep, true, true);
    CLI::App* c_wa = app.add_subcommand(
        "warden-analyze", "replay an event trace through the warden and print its report");
    c_wa->add_option("trace", trace_path, "event trace file to replay")->required();
    c_wa->add_option("--factor", factor,
                     "flag connections above this multiple of the median rate");
    c_wa->add_option("--out", ov.out_path, "output file path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        std::set<std::string> seen;
        ExperimentConfig ec = detail::load_config(config_path, &seen);
        if (c_run->count("--seed") || c_cal->count("--seed") || c_sweep->count("--seed"))
            ov.seed = ov_seed;
        if (c_run->count("--ir-p") || c_sweep->count("--ir-p")) ov.ir_p = ov_ir_p;
        if (c_cal->count("--nr-p") || c_sweep->count("--nr-p")) ov.nr_p = ov_nr_p;
        detail::apply_overrides(ec, ov);

        if (c_run->parsed()) {
            bool seed_known = ov.seed.has_value() || seen.count("seed") > 0;
            return detail::cmd_run(ec, ov, seed_known, out);
        }
        if (c_cal->parsed()) return detail::cmd_calibrate(ec, ov, out);
        if (c_sweep->parsed()) return detail::cmd_sweep(ec, ov, out);
        if (c_wa->parsed()) return detail::cmd_warden_analyze(trace_path, factor, ov, out);
        err << "error: no subcommand selected\n";
        return 2;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace rsteg
