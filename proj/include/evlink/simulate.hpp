#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "evlink/events.hpp"
#include "evlink/modem.hpp"

namespace evlink {

struct SensorDims {
    std::uint16_t width = 1280;
    std::uint16_t height = 720;
};

struct Waypoint {
    std::uint64_t t_us = 0;
    double x = 0.0;
    double y = 0.0;
};

/// Transmitter motion on the image plane. Construction validates that the
/// path stays within sensor bounds for its declared validity window.
class Trajectory {
public:
    enum class Kind { stationary, linear, circular, waypoints };

    static Trajectory stationary(double x, double y, SensorDims dims);
    /// Valid until the straight path exits the sensor.
    static Trajectory linear(double x0, double y0, double vx, double vy,
                             SensorDims dims);
    /// diameter_px is the motion-path diameter; rim speed = omega * d / 2.
    static Trajectory circular(double cx, double cy, double diameter_px,
                               double omega_rad_s, SensorDims dims,
                               double phase0 = 0.0);
    static Trajectory waypoints(std::vector<Waypoint> points, SensorDims dims);

    Eigen::Vector2d position(std::uint64_t t_us) const;
    Eigen::Vector2d velocity(std::uint64_t t_us) const;
    /// Image-plane speed magnitude; throws std::out_of_range past validity.
    double pixel_speed(std::uint64_t t_us) const;

    std::uint64_t valid_duration_us() const { return valid_us_; }
    Kind kind() const { return kind_; }
    SensorDims dims() const { return dims_; }

private:
    Trajectory() = default;
    void check(std::uint64_t t_us) const;

    Kind kind_ = Kind::stationary;
    SensorDims dims_;
    std::uint64_t valid_us_ = UINT64_MAX;
    double x0_ = 0.0, y0_ = 0.0;
    double vx_ = 0.0, vy_ = 0.0;
    double cx_ = 0.0, cy_ = 0.0, radius_ = 0.0, omega_ = 0.0, phase0_ = 0.0;
    std::vector<Waypoint> points_;
};

/// Optical transmitter model: blob shape, per-edge event yield, motion-event
/// density and background noise. `distance_scale` divides the edge yield
/// (range enters only as an event-count factor).
struct LedModel {
    double lambda1 = 6.0; // px
    double lambda2 = 6.0; // px
    bool orientation_follows_velocity = true;
    double events_per_edge = 30.0;   // mean burst size per ON/OFF transition
    double motion_event_rate = 2.0;  // events per px of travel while ON
    double noise_rate = 30000.0;     // background events/s over the sensor
    double distance_scale = 1.0;
    double elongation_s = 1e-3;      // major-axis growth: speed * this, px
};

struct TruthSample {
    std::uint64_t t_us = 0;
    double x = 0.0, y = 0.0;
    double l1 = 0.0, l2 = 0.0, theta = 0.0;
    int bit = 0; // LED level at the sample time
};

struct GroundTruth {
    std::vector<TruthSample> trace; // sampled at 1 kHz
    OnOffSchedule schedule;
    // Kept-event census per source, for distribution checks.
    std::size_t edge_events = 0;
    std::size_t motion_events = 0;
    std::size_t noise_events = 0;
};

struct SimResult {
    std::vector<Event> events;
    GroundTruth truth;
};

/// Renders the schedule into an event stream: Poisson bursts of
/// edge-polarity events per LED transition, leading/trailing motion events
/// along the swept path while the LED is on, and uniform background noise.
/// Deterministic for a fixed seed. Throws on invalid configuration.
SimResult simulate(const Trajectory& traj, const LedModel& led,
                   const OnOffSchedule& schedule, std::uint64_t seed);

void write_truth(const std::string& path, const GroundTruth& truth);
void write_schedule(const std::string& path, const OnOffSchedule& schedule);
OnOffSchedule read_schedule(const std::string& path, double carrier_hz);

} // namespace evlink
