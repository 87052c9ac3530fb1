#include "evlink/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "evlink/geometry.hpp"

namespace evlink {

namespace {

constexpr double kPi = std::numbers::pi;

// Deterministic splitmix64 stream; draw order is part of the output contract
// (edge bursts, then motion events, then noise, then a stable sort).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    double uniform() { // [0, 1)
        return double(next_u64() >> 11) * 0x1.0p-53;
    }

    double normal() {
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    std::uint64_t poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        const double limit = std::exp(-lambda);
        std::uint64_t k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform();
        } while (p > limit);
        return k - 1;
    }

    double exponential(double rate) {
        return -std::log(1.0 - uniform()) / rate;
    }

private:
    std::uint64_t state_;
};

} // namespace

Trajectory Trajectory::stationary(double x, double y, SensorDims dims) {
    Trajectory t;
    t.kind_ = Kind::stationary;
    t.dims_ = dims;
    t.x0_ = x;
    t.y0_ = y;
    if (x < 0 || y < 0 || x > dims.width - 1 || y > dims.height - 1) {
        throw std::invalid_argument("trajectory: start outside sensor");
    }
    return t;
}

Trajectory Trajectory::linear(double x0, double y0, double vx, double vy,
                              SensorDims dims) {
    Trajectory t;
    t.kind_ = Kind::linear;
    t.dims_ = dims;
    t.x0_ = x0;
    t.y0_ = y0;
    t.vx_ = vx;
    t.vy_ = vy;
    if (x0 < 0 || y0 < 0 || x0 > dims.width - 1 || y0 > dims.height - 1) {
        throw std::invalid_argument("trajectory: start outside sensor");
    }
    double exit_s = std::numeric_limits<double>::infinity();
    const auto axis_exit = [](double p, double v, double hi) {
        if (v > 0.0) return (hi - p) / v;
        if (v < 0.0) return -p / v;
        return std::numeric_limits<double>::infinity();
    };
    exit_s = std::min(exit_s, axis_exit(x0, vx, double(dims.width - 1)));
    exit_s = std::min(exit_s, axis_exit(y0, vy, double(dims.height - 1)));
    t.valid_us_ = std::isinf(exit_s)
                      ? UINT64_MAX
                      : std::uint64_t(std::floor(exit_s * 1e6));
    return t;
}

Trajectory Trajectory::circular(double cx, double cy, double diameter_px,
                                double omega_rad_s, SensorDims dims,
                                double phase0) {
    Trajectory t;
    t.kind_ = Kind::circular;
    t.dims_ = dims;
    t.cx_ = cx;
    t.cy_ = cy;
    t.radius_ = diameter_px / 2.0;
    t.omega_ = omega_rad_s;
    t.phase0_ = phase0;
    if (diameter_px <= 0.0) {
        throw std::invalid_argument("trajectory: diameter must be positive");
    }
    if (cx - t.radius_ < 0 || cy - t.radius_ < 0 ||
        cx + t.radius_ > dims.width - 1 || cy + t.radius_ > dims.height - 1) {
        throw std::invalid_argument("trajectory: circle exceeds sensor bounds");
    }
    return t;
}

Trajectory Trajectory::waypoints(std::vector<Waypoint> points, SensorDims dims) {
    Trajectory t;
    t.kind_ = Kind::waypoints;
    t.dims_ = dims;
    if (points.empty()) {
        throw std::invalid_argument("trajectory: no waypoints");
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Waypoint& w = points[i];
        if (w.x < 0 || w.y < 0 || w.x > dims.width - 1 || w.y > dims.height - 1) {
            throw std::invalid_argument("trajectory: waypoint outside sensor");
        }
        if (i > 0 && w.t_us <= points[i - 1].t_us) {
            throw std::invalid_argument("trajectory: waypoint times not increasing");
        }
    }
    if (points.front().t_us != 0) {
        throw std::invalid_argument("trajectory: first waypoint must be at t=0");
    }
    t.valid_us_ = points.back().t_us;
    t.points_ = std::move(points);
    return t;
}

void Trajectory::check(std::uint64_t t_us) const {
    if (t_us > valid_us_) {
        throw std::out_of_range("trajectory: time beyond validity");
    }
}

Eigen::Vector2d Trajectory::position(std::uint64_t t_us) const {
    check(t_us);
    const double t_s = double(t_us) * 1e-6;
    switch (kind_) {
    case Kind::stationary:
        return {x0_, y0_};
    case Kind::linear:
        return {x0_ + vx_ * t_s, y0_ + vy_ * t_s};
    case Kind::circular: {
        const double a = phase0_ + omega_ * t_s;
        return {cx_ + radius_ * std::cos(a), cy_ + radius_ * std::sin(a)};
    }
    case Kind::waypoints: {
        auto it = std::upper_bound(points_.begin(), points_.end(), t_us,
                                   [](std::uint64_t t, const Waypoint& w) {
                                       return t < w.t_us;
                                   });
        if (it == points_.begin()) return {points_.front().x, points_.front().y};
        if (it == points_.end()) return {points_.back().x, points_.back().y};
        const Waypoint& b = *it;
        const Waypoint& a = *(it - 1);
        const double f = double(t_us - a.t_us) / double(b.t_us - a.t_us);
        return {a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)};
    }
    }
    return {x0_, y0_};
}

Eigen::Vector2d Trajectory::velocity(std::uint64_t t_us) const {
    check(t_us);
    switch (kind_) {
    case Kind::stationary:
        return {0.0, 0.0};
    case Kind::linear:
        return {vx_, vy_};
    case Kind::circular: {
        const double a = phase0_ + omega_ * double(t_us) * 1e-6;
        return {-radius_ * omega_ * std::sin(a), radius_ * omega_ * std::cos(a)};
    }
    case Kind::waypoints: {
        auto it = std::upper_bound(points_.begin(), points_.end(), t_us,
                                   [](std::uint64_t t, const Waypoint& w) {
                                       return t < w.t_us;
                                   });
        if (it == points_.begin() || it == points_.end()) return {0.0, 0.0};
        const Waypoint& b = *it;
        const Waypoint& a = *(it - 1);
        const double dt_s = double(b.t_us - a.t_us) * 1e-6;
        return {(b.x - a.x) / dt_s, (b.y - a.y) / dt_s};
    }
    }
    return {0.0, 0.0};
}

double Trajectory::pixel_speed(std::uint64_t t_us) const {
    return velocity(t_us).norm();
}

namespace {

double led_orientation(const LedModel& led, const Eigen::Vector2d& vel) {
    if (!led.orientation_follows_velocity || vel.norm() < 1e-9) return 0.0;
    return angle_diff_pi_periodic(std::atan2(vel.y(), vel.x()), 0.0);
}

void validate_schedule(const OnOffSchedule& schedule) {
    bool level = false;
    std::uint64_t prev = 0;
    for (std::size_t i = 0; i < schedule.edges.size(); ++i) {
        const ScheduleEdge& e = schedule.edges[i];
        if (i > 0 && e.t_us <= prev) {
            throw std::invalid_argument("schedule: edge times not increasing");
        }
        if (e.on == level) {
            throw std::invalid_argument("schedule: levels do not alternate");
        }
        level = e.on;
        prev = e.t_us;
    }
    if (!schedule.edges.empty() && prev > schedule.duration_us) {
        throw std::invalid_argument("schedule: edge beyond duration");
    }
}

} // namespace

SimResult simulate(const Trajectory& traj, const LedModel& led,
                   const OnOffSchedule& schedule, std::uint64_t seed) {
    if (led.lambda1 <= 0.0 || led.lambda2 <= 0.0) {
        throw std::invalid_argument("simulate: LED axes must be positive");
    }
    if (led.events_per_edge < 0.0 || led.motion_event_rate < 0.0 ||
        led.noise_rate < 0.0 || led.distance_scale <= 0.0) {
        throw std::invalid_argument("simulate: rates must be non-negative");
    }
    validate_schedule(schedule);
    if (schedule.duration_us > traj.valid_duration_us()) {
        throw std::invalid_argument(
            "simulate: schedule outlives trajectory validity");
    }

    const SensorDims dims = traj.dims();
    Rng rng(seed);
    SimResult result;
    result.truth.schedule = schedule;
    std::vector<Event>& events = result.events;

    const auto emit = [&](double t_us, double x, double y, int p,
                          std::size_t& census) {
        const long long xi = std::llround(x);
        const long long yi = std::llround(y);
        if (xi < 0 || yi < 0 || xi >= dims.width || yi >= dims.height) return;
        events.push_back(Event{std::uint64_t(std::llround(t_us)),
                               std::uint16_t(xi), std::uint16_t(yi),
                               std::int8_t(p)});
        ++census;
    };

    // Burst timestamps spread over a fraction of the shortest edge gap so
    // bursts stay resolvable at the highest carrier.
    double min_gap_us = 1e9;
    for (std::size_t i = 1; i < schedule.edges.size(); ++i) {
        min_gap_us = std::min(min_gap_us, double(schedule.edges[i].t_us -
                                                 schedule.edges[i - 1].t_us));
    }
    const double spread_us = std::min(50.0, min_gap_us / 4.0);
    const double eff_epe = led.events_per_edge / led.distance_scale;

    // 1. Edge bursts: Gaussian blob samples with the edge's polarity.
    for (const ScheduleEdge& edge : schedule.edges) {
        const std::uint64_t n = rng.poisson(eff_epe);
        for (std::uint64_t j = 0; j < n; ++j) {
            const double dt = rng.uniform() * spread_us;
            const std::uint64_t te =
                std::min(edge.t_us + std::uint64_t(std::llround(dt)),
                         schedule.duration_us);
            const Eigen::Vector2d c = traj.position(te);
            const double theta = led_orientation(led, traj.velocity(te));
            const double g1 = rng.normal();
            const double g2 = rng.normal();
            const double ct = std::cos(theta), st = std::sin(theta);
            const double dx = ct * led.lambda1 * g1 - st * led.lambda2 * g2;
            const double dy = st * led.lambda1 * g1 + ct * led.lambda2 * g2;
            emit(double(te), c.x() + dx, c.y() + dy, edge.on ? 1 : -1,
                 result.truth.edge_events);
        }
    }

    // 2. Motion events while the LED is on: sampled from a velocity-elongated
    // blob, polarity + ahead of the center and - behind it.
    if (led.motion_event_rate > 0.0) {
        bool level = false;
        std::uint64_t t_prev = 0;
        std::vector<std::pair<std::uint64_t, std::uint64_t>> on_spans;
        for (const ScheduleEdge& edge : schedule.edges) {
            if (level && edge.t_us > t_prev) on_spans.push_back({t_prev, edge.t_us});
            level = edge.on;
            t_prev = edge.t_us;
        }
        if (level && schedule.duration_us > t_prev) {
            on_spans.push_back({t_prev, schedule.duration_us});
        }
        for (const auto& [t_a, t_b] : on_spans) {
            std::uint64_t t = t_a;
            while (t < t_b) {
                const Eigen::Vector2d vel = traj.velocity(t);
                const double speed = vel.norm();
                if (speed < 1e-9) { // still segment: nothing sweeps
                    t += std::min<std::uint64_t>(500, t_b - t);
                    continue;
                }
                double step_us = std::clamp(0.25 / speed * 1e6, 5.0, 500.0);
                step_us = std::min(step_us, double(t_b - t));
                const double ds_px = speed * step_us * 1e-6;
                const std::uint64_t n =
                    rng.poisson(led.motion_event_rate * ds_px);
                const double theta = std::atan2(vel.y(), vel.x());
                const double major = led.lambda1 + speed * led.elongation_s;
                const double ct = std::cos(theta), st = std::sin(theta);
                for (std::uint64_t j = 0; j < n; ++j) {
                    const double tj = double(t) + rng.uniform() * step_us;
                    const Eigen::Vector2d c =
                        traj.position(std::uint64_t(std::llround(tj)));
                    const double g1 = rng.normal();
                    const double g2 = rng.normal();
                    const double dx = ct * major * g1 - st * led.lambda2 * g2;
                    const double dy = st * major * g1 + ct * led.lambda2 * g2;
                    emit(tj, c.x() + dx, c.y() + dy, g1 >= 0.0 ? 1 : -1,
                         result.truth.motion_events);
                }
                t += std::uint64_t(std::llround(step_us));
                if (step_us < 1.0) break; // degenerate span guard
            }
        }
    }

    // 3. Background noise: uniform Poisson process over the sensor.
    if (led.noise_rate > 0.0) {
        double t = rng.exponential(led.noise_rate) * 1e6;
        while (t < double(schedule.duration_us)) {
            const double x = rng.uniform() * dims.width;
            const double y = rng.uniform() * dims.height;
            const int p = rng.uniform() < 0.5 ? 1 : -1;
            emit(t, std::floor(x), std::floor(y), p, result.truth.noise_events);
            t += rng.exponential(led.noise_rate) * 1e6;
        }
    }

    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return a.t_us < b.t_us; });

    // Ground truth at 1 kHz.
    for (std::uint64_t t = 0; t <= schedule.duration_us; t += 1000) {
        TruthSample s;
        s.t_us = t;
        const Eigen::Vector2d p = traj.position(t);
        s.x = p.x();
        s.y = p.y();
        s.l1 = std::max(led.lambda1, led.lambda2);
        s.l2 = std::min(led.lambda1, led.lambda2);
        s.theta = led_orientation(led, traj.velocity(t));
        s.bit = schedule.level_at(t) ? 1 : 0;
        result.truth.trace.push_back(s);
    }
    return result;
}

void write_truth(const std::string& path, const GroundTruth& truth) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "t_us,x,y,l1,l2,theta,bit\n";
    out.precision(9);
    for (const TruthSample& s : truth.trace) {
        out << s.t_us << ',' << s.x << ',' << s.y << ',' << s.l1 << ',' << s.l2
            << ',' << s.theta << ',' << s.bit << '\n';
    }
}

void write_schedule(const std::string& path, const OnOffSchedule& schedule) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "t_us,level\n";
    for (const ScheduleEdge& e : schedule.edges) {
        out << e.t_us << ',' << (e.on ? 1 : 0) << '\n';
    }
}

OnOffSchedule read_schedule(const std::string& path, double carrier_hz) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "t_us,level") {
        throw std::runtime_error(path + ": expected header 't_us,level'");
    }
    OnOffSchedule sched;
    sched.carrier_hz = carrier_hz;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw std::runtime_error(path + ": malformed schedule line");
        }
        ScheduleEdge e;
        e.t_us = std::stoull(line.substr(0, comma));
        e.on = std::stoi(line.substr(comma + 1)) != 0;
        sched.edges.push_back(e);
    }
    if (!sched.edges.empty()) {
        const double t_bit_us = 1e6 / carrier_hz;
        sched.duration_us =
            sched.edges.back().t_us + std::uint64_t(std::llround(t_bit_us));
    }
    return sched;
}

} // namespace evlink
