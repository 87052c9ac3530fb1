#include <doctest.h>

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "evlink/gaukf.hpp"

using namespace evlink;

namespace {
constexpr double kPi = std::numbers::pi;

FilterBelief make_belief(double x, double y, double vx, double vy, double l1,
                         double l2, double theta, double omega) {
    FilterBelief b;
    b.mean.x = x;
    b.mean.y = y;
    b.mean.vx = vx;
    b.mean.vy = vy;
    b.mean.mu1 = std::log(l1);
    b.mean.mu2 = std::log(l2);
    b.mean.theta = theta;
    b.mean.omega = omega;
    b.cov = Eigen::Matrix<double, 8, 8>::Identity() * 0.5;
    b.t_us = 0;
    return b;
}

// Events drawn from a Gaussian blob, all timestamped inside [t0, t0+spread].
std::vector<Event> blob_events(std::mt19937_64& rng, int n, double cx,
                               double cy, double l1, double l2, double theta,
                               std::uint64_t t0, std::uint64_t spread) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<Event> events;
    const double ct = std::cos(theta), st = std::sin(theta);
    for (int i = 0; i < n; ++i) {
        const double g1 = g(rng) * l1, g2 = g(rng) * l2;
        const double x = cx + ct * g1 - st * g2;
        const double y = cy + st * g1 + ct * g2;
        events.push_back({t0 + (spread ? rng() % spread : 0),
                          std::uint16_t(std::lround(x)),
                          std::uint16_t(std::lround(y)), 1});
    }
    std::sort(events.begin(), events.end(),
              [](const Event& a, const Event& b) { return a.t_us < b.t_us; });
    return events;
}

} // namespace

TEST_CASE("minor axis increment") {
    FilterBelief b = make_belief(0, 0, 0, 0, 4, 2, 0, 0);
    CHECK(minor_axis_increment(b) == 0.0); // startup convention

    b.history_len = 2;
    b.mu2_history[0] = std::log(2.0);
    b.mu2_history[1] = std::log(2.0);
    CHECK(minor_axis_increment(b) == doctest::Approx(0.0));

    b.mu2_history[1] = std::log(2.2);
    CHECK(minor_axis_increment(b) ==
          doctest::Approx(std::log(2.2 / 2.0)).epsilon(1e-12));

    b.mu2_history[0] = std::log(1.0);
    b.mu2_history[1] = std::log(10.0);
    CHECK(minor_axis_increment(b) == doctest::Approx(0.2)); // clamped
}

TEST_CASE("predict: stationary mean is unchanged, covariance grows by Q*dt") {
    const UkfParams params;
    const FilterBelief b = make_belief(100, 50, 0, 0, 4, 2, 0.3, 0);
    const FilterBelief out = predict(b, 0.004, params);
    CHECK(out.mean.x == doctest::Approx(100.0).epsilon(1e-9));
    CHECK(out.mean.y == doctest::Approx(50.0).epsilon(1e-9));
    CHECK(out.mean.mu1 == doctest::Approx(b.mean.mu1).epsilon(1e-9));
    CHECK(out.mean.theta == doctest::Approx(0.3).epsilon(1e-9));
    // position covariance grew by q_pos*dt plus the velocity pull-in
    const Eigen::Matrix<double, 8, 8> growth = out.cov - b.cov;
    CHECK(growth(4, 4) == doctest::Approx(params.Q(4, 4) * 0.004 + 0.5 * 0.004 * 0).epsilon(1e-6));
    CHECK(growth(7, 7) == doctest::Approx(params.Q(7, 7) * 0.004).epsilon(1e-6));
    CHECK(out.t_us == 4000);
}

TEST_CASE("predict: position advances by velocity * dt") {
    const UkfParams params;
    const FilterBelief b = make_belief(100, 50, 1000, 0, 4, 2, 0, 0);
    const FilterBelief out = predict(b, 0.004, params);
    CHECK(out.mean.x == doctest::Approx(104.0).epsilon(1e-9));
    CHECK(out.mean.y == doctest::Approx(50.0).epsilon(1e-9));
}

TEST_CASE("predict wraps orientation on the circle") {
    const UkfParams params;
    // theta = pi - 0.01 advancing at 10 rad/s for 4 ms crosses the seam
    const FilterBelief b = make_belief(0, 0, 0, 0, 4, 2, kPi - 0.01, 10.0);
    const FilterBelief out = predict(b, 0.004, params);
    CHECK(out.mean.theta == doctest::Approx(-kPi + 0.03).epsilon(1e-6));
}

TEST_CASE("predict rejects a non-finite state, naming the field") {
    const UkfParams params;
    FilterBelief b = make_belief(0, 0, 0, 0, 4, 2, 0, 0);
    b.mean.vx = std::nan("");
    CHECK_THROWS_WITH_AS(predict(b, 0.004, params), doctest::Contains("vx"),
                         std::invalid_argument);
}

TEST_CASE("make_measurement needs n_min events") {
    const UkfParams params;
    EventPacket p{0, 4000, {{1, 5, 5, 1}, {2, 6, 5, 1}, {3, 5, 6, 1}}};
    CHECK_FALSE(make_measurement(p, 4000, params).has_value());
    p.events.push_back({4, 6, 6, 1});
    CHECK(make_measurement(p, 4000, params).has_value());
}

TEST_CASE("make_measurement recovers generating blob parameters") {
    std::mt19937_64 rng(71);
    UkfParams params;
    EventPacket p{0, 4000, {}};
    // 2-sigma axes of 8 and 4 px mean sigma axes 4 and 2
    p.events = blob_events(rng, 100, 400, 300, 4, 2, 0.3, 3990, 10);
    const auto z = make_measurement(p, 4000, params);
    REQUIRE(z.has_value());
    CHECK(std::abs(z->x - 400) < 4 * 0.15 * 10);
    CHECK(z->lambda1 == doctest::Approx(4.0).epsilon(0.15));
    CHECK(z->lambda2 == doctest::Approx(2.0).epsilon(0.15));
    CHECK(z->theta == doctest::Approx(0.3).epsilon(0.15));
}

TEST_CASE("make_measurement floors a single-pixel packet") {
    const UkfParams params;
    EventPacket p{0, 4000, {}};
    for (int i = 0; i < 20; ++i) p.events.push_back({100, 77, 99, 1});
    const auto z = make_measurement(p, 4000, params);
    REQUIRE(z.has_value());
    CHECK(z->x == doctest::Approx(77.0));
    CHECK(z->y == doctest::Approx(99.0));
    CHECK(z->lambda1 == doctest::Approx(0.5));
    CHECK(z->lambda2 == doctest::Approx(0.5));
}

TEST_CASE("update with a zero innovation keeps the mean, shrinks covariance") {
    const UkfParams params;
    const FilterBelief b = make_belief(200, 100, 10, -5, 4, 2, 0.4, 0.1);
    const Measurement z{200, 100, 4, 2, 0.4};
    const FilterBelief out = update(b, z, params);
    CHECK(out.mean.x == doctest::Approx(200.0).epsilon(1e-9));
    CHECK(out.mean.y == doctest::Approx(100.0).epsilon(1e-9));
    CHECK(out.mean.mu1 == doctest::Approx(b.mean.mu1).epsilon(1e-9));
    CHECK(out.mean.theta == doctest::Approx(0.4).epsilon(1e-9));
    CHECK(out.cov.trace() < b.cov.trace());
}

TEST_CASE("update crosses the +-90 degree seam the short way") {
    const UkfParams params;
    const double deg = kPi / 180.0;
    const FilterBelief b = make_belief(0, 0, 0, 0, 8, 3, 85 * deg, 0);
    const Measurement z{0, 0, 8, 3, -85 * deg};
    const FilterBelief out = update(b, z, params);
    // the posterior moved upward past +85 degrees (toward 95 = -85 mod pi),
    // not down toward 0
    const double moved = out.mean.theta - 85 * deg;
    CHECK(moved > 0.0);
    CHECK(moved < 12 * deg);
}

TEST_CASE("axes stay positive through adversarial updates") {
    std::mt19937_64 rng(83);
    UkfParams params;
    FilterBelief b = make_belief(640, 360, 0, 0, 4, 2, 0, 0);
    for (int i = 0; i < 10000; ++i) {
        Measurement z;
        z.x = double(rng() % 1280);
        z.y = double(rng() % 720);
        const double l1 = 0.5 + double(rng() % 1000) / 10.0;
        const double l2 = 0.5 + std::fmod(double(rng() % 1000) / 10.0, l1);
        z.lambda1 = std::max(l1, l2);
        z.lambda2 = std::min(l1, l2);
        z.theta = double(rng() % 628) / 100.0 - kPi;
        z.theta = std::clamp(z.theta, -kPi / 2, kPi / 2 - 1e-9);
        b = update(b, z, params);
        REQUIRE(std::isfinite(b.mean.mu1));
        REQUIRE(std::isfinite(b.mean.mu2));
        REQUIRE(b.mean.lambda1() > 0.0);
        REQUIRE(b.mean.lambda2() > 0.0);
        REQUIRE(b.mean.lambda1() >= b.mean.lambda2());
        REQUIRE(b.mean.theta >= -kPi);
        REQUIRE(b.mean.theta < kPi);
    }
}

TEST_CASE("step: empty packet is predict-only and covariance grows") {
    const UkfParams params;
    const FilterBelief b = make_belief(100, 100, 0, 0, 4, 2, 0, 0);
    const EventPacket p{0, 4000, {}};
    const FilterBelief out = step(b, p, params);
    CHECK(out.t_us == 4000);
    CHECK(out.cov.trace() > b.cov.trace());
    CHECK(out.history_len == 0);
}

TEST_CASE("step rejects packets that precede the belief") {
    const UkfParams params;
    FilterBelief b = make_belief(0, 0, 0, 0, 4, 2, 0, 0);
    b.t_us = 8000;
    const EventPacket p{0, 4000, {}};
    CHECK_THROWS_AS(step(b, p, params), std::invalid_argument);
}

TEST_CASE("step tracks a stationary blinking blob to sub-pixel error") {
    std::mt19937_64 rng(91);
    const UkfParams params;
    EventPacket first{0, 4000, {}};
    first.events = blob_events(rng, 60, 500, 400, 3, 3, 0, 3000, 900);
    FilterBelief b = *acquire(first, params);
    for (int k = 1; k <= 100; ++k) {
        EventPacket p{std::uint64_t(k) * 4000, std::uint64_t(k + 1) * 4000, {}};
        p.events = blob_events(rng, 60, 500, 400, 3, 3, 0,
                               p.t_start_us + 3000, 900);
        b = step(b, p, params);
    }
    CHECK(std::hypot(b.mean.x - 500, b.mean.y - 400) < 1.0);
}

TEST_CASE("step tracks a constant-velocity blob with bounded lag") {
    std::mt19937_64 rng(97);
    const UkfParams params;
    const double vx = 3000.0; // px/s
    const double l1 = 4.0;
    auto center_x = [&](std::uint64_t t_us) { return 100.0 + vx * double(t_us) * 1e-6; };

    EventPacket first{0, 4000, {}};
    first.events = blob_events(rng, 80, center_x(3500), 300, l1, 3, 0, 3000, 1000);
    FilterBelief b = *acquire(first, params);
    double lag_sum = 0.0;
    int lag_count = 0;
    for (int k = 1; k <= 100; ++k) {
        EventPacket p{std::uint64_t(k) * 4000, std::uint64_t(k + 1) * 4000, {}};
        // events spread through the window as the blob moves
        for (int j = 0; j < 80; ++j) {
            const std::uint64_t t = p.t_start_us + rng() % 4000;
            auto ev = blob_events(rng, 1, center_x(t), 300, l1, 3, 0, t, 0);
            p.events.push_back(ev[0]);
        }
        std::sort(p.events.begin(), p.events.end(),
                  [](const Event& a, const Event& b) { return a.t_us < b.t_us; });
        b = step(b, p, params);
        if (k > 20) { // settled
            lag_sum += std::abs(b.mean.x - center_x(b.t_us));
            ++lag_count;
        }
    }
    // mean position lag below half the blob major axis
    CHECK(lag_sum / lag_count < 0.5 * 2 * l1);
}

TEST_CASE("gaukf equals a hand-rolled Kalman filter on the linear subproblem") {
    // With shape/orientation measurements pinned to the prediction, the
    // position/velocity block must match a plain 4D Kalman filter.
    UkfParams params;
    FilterBelief b = make_belief(10, 20, 5, -3, 4, 2, 0.2, 0);
    b.cov = Eigen::Matrix<double, 8, 8>::Zero();
    b.cov.diagonal() << 4, 4, 100, 100, 0.25, 0.25, 0.5, 1.0;

    Eigen::Vector4d kx(10, 20, 5, -3);
    Eigen::Matrix4d kp = Eigen::Matrix4d::Zero();
    kp.diagonal() << 4, 4, 100, 100;

    std::mt19937_64 rng(101);
    const double dt = 0.004;
    for (int k = 0; k < 50; ++k) {
        // UKF step
        FilterBelief pred = predict(b, dt, params);
        const Measurement z{kx[0] + double(rng() % 100) / 25.0,
                            kx[1] - double(rng() % 100) / 25.0,
                            pred.mean.lambda1(), pred.mean.lambda2(),
                            pred.mean.theta};
        b = update(pred, z, params);

        // reference KF with identical Q/R blocks
        Eigen::Matrix4d f = Eigen::Matrix4d::Identity();
        f(0, 2) = dt;
        f(1, 3) = dt;
        Eigen::Matrix4d q = Eigen::Matrix4d::Zero();
        q.diagonal() << params.Q(0, 0) * dt, params.Q(1, 1) * dt,
            params.Q(2, 2) * dt, params.Q(3, 3) * dt;
        kx = f * kx;
        kp = f * kp * f.transpose() + q;
        Eigen::Matrix<double, 2, 4> h = Eigen::Matrix<double, 2, 4>::Zero();
        h(0, 0) = 1;
        h(1, 1) = 1;
        Eigen::Matrix2d r = Eigen::Matrix2d::Identity() * params.R(0, 0);
        const Eigen::Vector2d zvec(z.x, z.y);
        const Eigen::Matrix2d s = h * kp * h.transpose() + r;
        const Eigen::Matrix<double, 4, 2> gain =
            kp * h.transpose() * s.inverse();
        kx += gain * (zvec - h * kx);
        kp = (Eigen::Matrix4d::Identity() - gain * h) * kp;

        CHECK(b.mean.x == doctest::Approx(kx[0]).epsilon(1e-6));
        CHECK(b.mean.y == doctest::Approx(kx[1]).epsilon(1e-6));
        CHECK(b.mean.vx == doctest::Approx(kx[2]).epsilon(1e-6));
        CHECK(b.mean.vy == doctest::Approx(kx[3]).epsilon(1e-6));
        CHECK(b.cov(0, 0) == doctest::Approx(kp(0, 0)).epsilon(1e-6));
        CHECK(b.cov(2, 2) == doctest::Approx(kp(2, 2)).epsilon(1e-6));
    }
}

TEST_CASE("posterior covariance stays symmetric and near-PSD") {
    std::mt19937_64 rng(107);
    const UkfParams params;
    FilterBelief b = make_belief(640, 360, 0, 0, 4, 2, 0, 0);
    for (int k = 1; k <= 200; ++k) {
        EventPacket p{std::uint64_t(k - 1) * 4000, std::uint64_t(k) * 4000, {}};
        const int n = int(rng() % 50);
        p.events = blob_events(rng, n, 600 + double(rng() % 80),
                               340 + double(rng() % 40), 4, 2, 0.1,
                               p.t_start_us + 100, 3800);
        b = step(b, p, params);
        const Eigen::Matrix<double, 8, 8> diff = b.cov - b.cov.transpose();
        CHECK(diff.cwiseAbs().maxCoeff() < 1e-12);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 8, 8>> eig(b.cov);
        CHECK(eig.eigenvalues().minCoeff() > -1e-9);
    }
}

TEST_CASE("filter-core cost is flat in packet size") {
    std::mt19937_64 rng(113);
    const UkfParams params;

    auto packet_of = [&](int n) {
        EventPacket p{0, 4000, {}};
        p.events = blob_events(rng, n, 640, 360, 4, 2, 0, 100, 3800);
        return p;
    };
    const EventPacket small = packet_of(40);
    const EventPacket large = packet_of(4000);
    const FilterBelief b = make_belief(640, 360, 0, 0, 4, 2, 0, 0);

    auto median_cost = [&](const EventPacket& p) {
        std::vector<double> xs;
        for (int i = 0; i < 40; ++i) {
            const auto tic = std::chrono::steady_clock::now();
            const FilterBelief out = step(b, p, params);
            const auto toc = std::chrono::steady_clock::now();
            (void)out;
            xs.push_back(
                std::chrono::duration<double, std::micro>(toc - tic).count());
        }
        std::sort(xs.begin(), xs.end());
        return xs[xs.size() / 2];
    };

    median_cost(small); // warm-up
    const double c_small = median_cost(small);
    const double c_large = median_cost(large);
    // 100x the events for well under 10x the time: the sigma-point core is
    // constant, only the weighted-moment accumulation scales.
    CHECK(c_large / c_small < 10.0);
}

TEST_CASE("acquire seeds from the packet statistics") {
    std::mt19937_64 rng(127);
    const UkfParams params;
    EventPacket p{0, 4000, {}};
    p.events = blob_events(rng, 200, 321, 123, 5, 2.5, 0.4, 3000, 900);
    const auto b = acquire(p, params);
    REQUIRE(b.has_value());
    CHECK(std::abs(b->mean.x - 321) < 2.0);
    CHECK(std::abs(b->mean.y - 123) < 2.0);
    CHECK(b->mean.vx == 0.0);
    CHECK(b->mean.omega == 0.0);
    CHECK(b->t_us == 4000);
    CHECK(b->cov(2, 2) == doctest::Approx(1e6));

    const EventPacket tiny{0, 4000, {{1, 5, 5, 1}}};
    CHECK_FALSE(acquire(tiny, params).has_value());
}
