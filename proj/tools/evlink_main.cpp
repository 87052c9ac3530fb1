// evlink: synthetic event streams, optical-link tracking and decoding.
//
// Subcommands: simulate, encode, run, bench, report. Every command is
// deterministic under a fixed --seed. Exit codes: 0 success, 1 operational
// error, 2 usage error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "evlink/config.hpp"
#include "evlink/events.hpp"
#include "evlink/modem.hpp"
#include "evlink/pipeline.hpp"
#include "evlink/simulate.hpp"

namespace fs = std::filesystem;
using namespace evlink;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --text accepts a literal string or @file.
std::string resolve_text(const std::string& arg) {
    if (arg.empty() || arg[0] != '@') return arg;
    std::ifstream in(arg.substr(1), std::ios::binary);
    if (!in) throw UsageError("cannot open text file " + arg.substr(1));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct CommonFlags {
    std::string config_path;
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    std::vector<std::string> overrides; // --set key=value
};

AppConfig load_config(const CommonFlags& common) {
    try {
        AppConfig cfg;
        if (!common.config_path.empty()) {
            cfg = AppConfig::load(common.config_path);
        }
        for (const std::string& kv : common.overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                throw UsageError("--set expects key=value, got '" + kv + "'");
            }
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        return cfg;
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception& e) {
        throw UsageError(e.what()); // bad configuration is a usage error
    }
}

void add_common(CLI::App* cmd, CommonFlags& common) {
    cmd->add_option("--config", common.config_path, "flat key=value config file");
    cmd->add_option("--seed", common.seed, "RNG seed (fixes all randomness)");
    cmd->add_option("--out-dir", common.out_dir, "output directory");
    cmd->add_option("--set", common.overrides,
                    "config override key=value (repeatable; wins over --config)");
}

Trajectory build_trajectory(const AppConfig& cfg, const std::string& kind,
                            double start_x, double start_y, double vel_x,
                            double vel_y, double diameter, double speed,
                            const std::string& waypoint_spec) {
    const SensorDims dims = cfg.sensor();
    const double cx = start_x >= 0 ? start_x : dims.width / 2.0;
    const double cy = start_y >= 0 ? start_y : dims.height / 2.0;
    if (kind == "stationary") {
        return Trajectory::stationary(cx, cy, dims);
    }
    if (kind == "linear") {
        return Trajectory::linear(cx, cy, vel_x, vel_y, dims);
    }
    if (kind == "circular") {
        if (diameter <= 0) throw UsageError("circular needs --diameter-px > 0");
        const double omega = 2.0 * speed / diameter;
        return Trajectory::circular(cx, cy, diameter, omega, dims);
    }
    if (kind == "waypoints") {
        // "t,x,y;t,x,y;..." in microseconds and pixels.
        std::vector<Waypoint> pts;
        std::istringstream ss(waypoint_spec);
        std::string item;
        while (std::getline(ss, item, ';')) {
            Waypoint w;
            if (std::sscanf(item.c_str(), "%lu,%lf,%lf", &w.t_us, &w.x, &w.y) != 3) {
                throw UsageError("bad waypoint '" + item + "' (want t,x,y)");
            }
            pts.push_back(w);
        }
        return Trajectory::waypoints(std::move(pts), dims);
    }
    throw UsageError("unknown trajectory kind '" + kind + "'");
}

int cmd_simulate(const CommonFlags& common, const std::string& traj_kind,
                 double start_x, double start_y, double vel_x, double vel_y,
                 double diameter, double speed, const std::string& waypoints,
                 const std::string& text_arg, double carrier_hz, bool binary) {
    const AppConfig cfg = load_config(common);
    const std::string text = resolve_text(text_arg);
    if (text.empty()) throw UsageError("--text resolved to empty payload");

    FrameFormat fmt;
    fmt.preamble_bits = cfg.modem_preamble_bits;
    const OnOffSchedule schedule = encode(text, carrier_hz, fmt);
    const Trajectory traj =
        build_trajectory(cfg, traj_kind, start_x, start_y, vel_x, vel_y,
                         diameter, speed, waypoints);
    const SimResult sim = simulate(traj, cfg.led_model(), schedule, common.seed);

    fs::create_directories(common.out_dir);
    const std::string events_path =
        (fs::path(common.out_dir) / (binary ? "events.evb" : "events.csv"))
            .string();
    write_events(events_path, sim.events);
    write_truth((fs::path(common.out_dir) / "truth.csv").string(), sim.truth);
    write_schedule((fs::path(common.out_dir) / "schedule.csv").string(),
                   schedule);

    std::cout << "simulate: " << sim.events.size() << " events ("
              << sim.truth.edge_events << " edge, " << sim.truth.motion_events
              << " motion, " << sim.truth.noise_events << " noise) over "
              << schedule.duration_us << " us -> " << events_path << "\n";
    return 0;
}

int cmd_encode(const CommonFlags& common, const std::string& text_arg,
               double carrier_hz) {
    const AppConfig cfg = load_config(common);
    const std::string text = resolve_text(text_arg);
    if (text.empty()) throw UsageError("--text resolved to empty payload");
    FrameFormat fmt;
    fmt.preamble_bits = cfg.modem_preamble_bits;
    const OnOffSchedule schedule = encode(text, carrier_hz, fmt);
    fs::create_directories(common.out_dir);
    const std::string path =
        (fs::path(common.out_dir) / "schedule.csv").string();
    write_schedule(path, schedule);
    std::cout << "encode: " << schedule.edges.size() << " edges, "
              << schedule.duration_us << " us -> " << path << "\n";
    return 0;
}

int cmd_run(const CommonFlags& common, const std::string& events_path,
            const std::string& tracker, const std::string& reference_path,
            const std::string& truth_path, double carrier_hz, double theta_hi,
            double theta_lo, bool auto_threshold, bool realtime,
            bool concurrent) {
    AppConfig cfg = load_config(common);
    if (tracker == "gaukf") {
        cfg.pipeline_tracker = TrackerKind::gaukf;
    } else if (tracker == "ekf") {
        cfg.pipeline_tracker = TrackerKind::ekf;
    } else {
        throw UsageError("--tracker must be gaukf or ekf");
    }
    if (carrier_hz > 0) cfg.modem_carrier_hz = carrier_hz;
    if (!std::isnan(theta_hi)) cfg.modem_theta_hi = theta_hi;
    if (!std::isnan(theta_lo)) cfg.modem_theta_lo = theta_lo;
    if (auto_threshold) cfg.modem_auto_threshold = true;

    const std::vector<Event> events = read_events(events_path);
    std::optional<std::string> reference;
    if (!reference_path.empty()) reference = resolve_text("@" + reference_path);

    // truth.csv, when given, scores the tracker against ground truth.
    GroundTruth truth;
    bool have_truth = false;
    if (!truth_path.empty()) {
        std::ifstream in(truth_path);
        if (!in) throw std::runtime_error("cannot open " + truth_path);
        std::string line;
        std::getline(in, line);
        if (line != "t_us,x,y,l1,l2,theta,bit") {
            throw std::runtime_error(truth_path + ": unexpected truth header");
        }
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            TruthSample s;
            if (std::sscanf(line.c_str(), "%lu,%lf,%lf,%lf,%lf,%lf,%d", &s.t_us,
                            &s.x, &s.y, &s.l1, &s.l2, &s.theta, &s.bit) != 7) {
                throw std::runtime_error(truth_path + ": malformed truth line");
            }
            truth.trace.push_back(s);
        }
        have_truth = true;
    }

    PipelineOptions opts;
    opts.realtime = realtime;
    opts.concurrent = concurrent;
    const RunReport report =
        run_pipeline(events, cfg, opts, have_truth ? &truth : nullptr,
                     reference ? &*reference : nullptr);

    fs::create_directories(common.out_dir);
    write_timing_csv((fs::path(common.out_dir) / "timing.csv").string(),
                     report.timing);
    write_trace_csv((fs::path(common.out_dir) / "trace.csv").string(),
                    report.trace, cfg.pipeline_tracker == TrackerKind::ekf);
    {
        std::ofstream out(fs::path(common.out_dir) / "decoded.txt",
                          std::ios::binary);
        out << report.decoded;
    }
    if (reference) {
        write_words_csv((fs::path(common.out_dir) / "words.csv").string(),
                        report.decoded, *reference);
    }

    std::cout << "run: " << report.timing.size() << " packets, decoded "
              << report.decoded.size() << " bytes\n";
    if (report.accuracy) {
        std::cout << "  word accuracy " << report.accuracy->word_accuracy
                  << ", char accuracy " << report.accuracy->char_accuracy
                  << "\n";
    }
    if (report.rms_position_error) {
        std::cout << "  rms position error " << *report.rms_position_error
                  << " px";
        if (report.mean_pixel_speed) {
            std::cout << " at mean speed " << *report.mean_pixel_speed
                      << " px/s";
        }
        std::cout << "\n";
    }
    std::cout << "  timing mean " << report.mean_us << " us, p99 "
              << report.p99_us << " us, max " << report.max_us
              << " us, budget violations " << report.budget_violations << "\n";
    if (!report.diagnostic.empty()) {
        std::cout << "  decoder: " << report.diagnostic << "\n";
    }
    return 0;
}

int cmd_bench(const CommonFlags& common) {
    const AppConfig cfg = load_config(common);
    const std::vector<BenchRow> rows = run_bench_sweep(cfg, common.seed);
    fs::create_directories(common.out_dir);
    const std::string path = (fs::path(common.out_dir) / "bench.csv").string();
    write_bench_csv(path, rows);
    for (const BenchRow& r : rows) {
        std::cout << r.freq_hz << " Hz " << r.tracker << ": mean " << r.mean_us
                  << " us, p99 " << r.p99_us << " us, max " << r.max_us
                  << " us (" << r.events_per_packet << " ev/packet)\n";
    }
    std::cout << "bench -> " << path << "\n";
    return 0;
}

int cmd_report(const CommonFlags& common, int reps) {
    const AppConfig cfg = load_config(common);
    const std::vector<SpeedAccuracyRow> rows =
        run_speed_accuracy_sweep(cfg, common.seed, reps);
    fs::create_directories(common.out_dir);
    const std::string path =
        (fs::path(common.out_dir) / "speed_accuracy.csv").string();
    write_speed_accuracy_csv(path, rows);
    for (const SpeedAccuracyRow& r : rows) {
        std::cout << r.speed_px_s << " px/s @ " << r.carrier_hz
                  << " Hz: word " << r.word_accuracy << ", char "
                  << r.char_accuracy << "\n";
    }
    std::cout << "report -> " << path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"event-stream optical link: simulate, track, decode"};
    app.require_subcommand(1);

    CommonFlags common;

    // simulate
    auto* sim = app.add_subcommand("simulate", "generate a synthetic stream");
    add_common(sim, common);
    std::string traj_kind = "stationary";
    double start_x = -1, start_y = -1, vel_x = 0, vel_y = 0;
    double diameter = 0, speed = 0;
    std::string waypoints;
    std::string text_arg;
    double carrier_hz = 1000.0;
    bool binary = false;
    sim->add_option("--traj", traj_kind,
                    "stationary | linear | circular | waypoints");
    sim->add_option("--start-x", start_x, "start/center x (px)");
    sim->add_option("--start-y", start_y, "start/center y (px)");
    sim->add_option("--vel-x", vel_x, "linear velocity x (px/s)");
    sim->add_option("--vel-y", vel_y, "linear velocity y (px/s)");
    sim->add_option("--diameter-px", diameter, "circular path diameter (px)");
    sim->add_option("--speed-px-s", speed, "circular rim speed (px/s)");
    sim->add_option("--waypoints", waypoints, "t,x,y;t,x,y;...");
    sim->add_option("--text", text_arg, "payload text or @file")->required();
    sim->add_option("--carrier-hz", carrier_hz, "bit rate (Hz)");
    sim->add_flag("--binary-events", binary, "write events.evb instead of CSV");

    // encode
    auto* enc = app.add_subcommand("encode", "text -> LED on/off schedule");
    add_common(enc, common);
    std::string enc_text;
    double enc_carrier = 1000.0;
    enc->add_option("--text", enc_text, "payload text or @file")->required();
    enc->add_option("--carrier-hz", enc_carrier, "bit rate (Hz)");

    // run
    auto* run = app.add_subcommand("run", "track + decode an event file");
    add_common(run, common);
    std::string events_path, tracker = "gaukf", reference_path, truth_path;
    double run_carrier = 0.0;
    double theta_hi = std::nan(""), theta_lo = std::nan("");
    bool auto_threshold = false;
    bool realtime = false, concurrent = false;
    run->add_option("--events", events_path, "events.csv or events.evb")
        ->required();
    run->add_option("--tracker", tracker, "gaukf | ekf");
    run->add_option("--reference", reference_path,
                    "reference text file for accuracy scoring");
    run->add_option("--truth", truth_path, "truth.csv for tracking error");
    run->add_option("--carrier-hz", run_carrier,
                    "decoder bit rate (overrides config)");
    run->add_option("--theta-hi", theta_hi, "upper decision threshold");
    run->add_option("--theta-lo", theta_lo, "lower decision threshold");
    run->add_flag("--auto-threshold", auto_threshold,
                  "calibrate thresholds from the preamble amplitude");
    run->add_flag("--realtime", realtime, "pace ingestion at wall clock");
    run->add_flag("--concurrent", concurrent,
                  "run the decoder on its own stage thread");

    // bench
    auto* bench = app.add_subcommand("bench", "carrier sweep timing table");
    add_common(bench, common);

    // report
    auto* report = app.add_subcommand("report", "speed/carrier accuracy grid");
    add_common(report, common);
    int reps = 1;
    report->add_option("--reps", reps, "repetitions per grid cell");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (sim->parsed()) {
            return cmd_simulate(common, traj_kind, start_x, start_y, vel_x,
                                vel_y, diameter, speed, waypoints, text_arg,
                                carrier_hz, binary);
        }
        if (enc->parsed()) return cmd_encode(common, enc_text, enc_carrier);
        if (run->parsed()) {
            return cmd_run(common, events_path, tracker, reference_path,
                           truth_path, run_carrier, theta_hi, theta_lo,
                           auto_threshold, realtime, concurrent);
        }
        if (bench->parsed()) return cmd_bench(common);
        if (report->parsed()) return cmd_report(common, reps);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
