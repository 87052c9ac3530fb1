#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "evlink/config.hpp"
#include "evlink/events.hpp"
#include "evlink/geometry.hpp"
#include "evlink/modem.hpp"
#include "evlink/simulate.hpp"

namespace evlink {

/// Decoder input region: the tracker's shape ellipse scaled by k_roi around
/// the predicted center. Boundary is closed (Mahalanobis distance == k_roi
/// is retained).
struct Roi {
    Eigen::Vector2d center = Eigen::Vector2d::Zero();
    Ellipse shape;
    double k_roi = 3.0;
    std::uint64_t valid_t_us = 0;

    bool contains(double x, double y) const;
};

/// Keeps events with Mahalanobis distance <= k_roi under the shape matrix.
EventPacket roi_gate(const EventPacket& packet, const Roi& roi);

struct PipelineOptions {
    bool concurrent = false; // run the decoder on its own stage thread
    bool realtime = false;   // pace ingestion at wall-clock speed
};

struct PacketTiming {
    std::uint64_t t_start_us = 0;
    std::size_t events_in = 0;
    std::size_t events_filtered = 0;
    std::size_t events_gated = 0;
    double step_us = 0.0;
    bool violated = false;
};

struct TraceRow {
    std::uint64_t t_us = 0;
    double x = 0, y = 0, vx = 0, vy = 0;
    double l1 = 0, l2 = 0, theta = 0, omega = 0;
    double step_us = 0.0;
    std::uint64_t clamped = 0; // EKF axis clamps (cumulative); 0 for gaukf
};

struct RoiTraceRow {
    std::uint64_t t_start_us = 0;
    bool valid = false;
    Roi roi;
};

struct RunReport {
    std::string decoded;
    std::vector<bool> byte_ok;
    std::optional<AccuracyReport> accuracy;
    std::vector<PacketTiming> timing;
    double mean_us = 0.0;
    double p99_us = 0.0;
    double max_us = 0.0;
    std::uint64_t budget_violations = 0;
    std::optional<double> rms_position_error;
    std::optional<double> mean_pixel_speed;
    std::vector<TraceRow> trace;
    std::vector<RoiTraceRow> roi_trace;
    std::uint64_t ring_overflows = 0;
    std::string diagnostic;
};

/// Runs filter -> tracker -> ROI gate -> shared buffer -> decoder over the
/// stream, per 4 ms window, timing the tracking side of each packet against
/// the budget. Loss of measurement for pipeline.loss_windows windows drops
/// back to full-frame acquisition. Offline (non-realtime) execution never
/// drops packets on the stage boundary, so single-threaded and concurrent
/// runs decode identically.
RunReport run_pipeline(std::span<const Event> events, const AppConfig& cfg,
                       const PipelineOptions& opts = {},
                       const GroundTruth* truth = nullptr,
                       const std::string* reference = nullptr);

void write_timing_csv(const std::string& path,
                      std::span<const PacketTiming> rows);
void write_trace_csv(const std::string& path, std::span<const TraceRow> rows,
                     bool with_clamped);
void write_words_csv(const std::string& path, const std::string& decoded,
                     const std::string& reference);

struct BenchRow {
    double freq_hz = 0.0;
    std::string tracker;
    double mean_us = 0.0;
    double p99_us = 0.0;
    double max_us = 0.0;
    double events_per_packet = 0.0;
};

/// Fig-5-style sweep: carriers {1, 2.5, 5, 10} kHz x {gaukf, ekf} on the
/// same synthetic streams.
std::vector<BenchRow> run_bench_sweep(const AppConfig& cfg, std::uint64_t seed);
void write_bench_csv(const std::string& path, std::span<const BenchRow> rows);

struct SpeedAccuracyRow {
    double speed_px_s = 0.0;
    double carrier_hz = 0.0;
    double word_accuracy = 0.0;
    double char_accuracy = 0.0;
};

/// Table-I-style grid: rim speeds {1500, 3000, 4500, 6000, 12000} px/s x
/// carriers {1, 5, 10} kHz on a 610 px circular path; accuracy averaged
/// over `reps` seeds.
std::vector<SpeedAccuracyRow> run_speed_accuracy_sweep(const AppConfig& cfg,
                                                       std::uint64_t seed,
                                                       int reps = 1);
void write_speed_accuracy_csv(const std::string& path,
                              std::span<const SpeedAccuracyRow> rows);

} // namespace evlink
