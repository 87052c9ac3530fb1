#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "evlink/geometry.hpp"

using namespace evlink;

namespace {
constexpr double kPi = std::numbers::pi;

Ellipse random_ellipse(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> axis(0.5, 20.0);
    std::uniform_real_distribution<double> angle(-kPi / 2, kPi / 2);
    double a = axis(rng), b = axis(rng);
    if (a < b) std::swap(a, b);
    return {a, b, angle(rng)};
}
} // namespace

TEST_CASE("cov_from_ellipse known values") {
    const Spd2 iso = cov_from_ellipse({1, 1, 0.7});
    CHECK(iso.a == doctest::Approx(1.0));
    CHECK(iso.b == doctest::Approx(0.0));
    CHECK(iso.c == doctest::Approx(1.0));

    const Spd2 axis = cov_from_ellipse({2, 1, 0});
    CHECK(axis.a == doctest::Approx(4.0));
    CHECK(axis.b == doctest::Approx(0.0));
    CHECK(axis.c == doctest::Approx(1.0));

    // direct R * diag * R^T product oracle at theta = pi/4
    const Spd2 rot = cov_from_ellipse({2, 1, kPi / 4});
    CHECK(rot.a == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(rot.b == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(rot.c == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("ellipse_from_cov known values") {
    const Ellipse a = ellipse_from_cov({4, 0, 1});
    CHECK(a.lambda1 == doctest::Approx(2.0));
    CHECK(a.lambda2 == doctest::Approx(1.0));
    CHECK(a.theta == doctest::Approx(0.0));

    const Ellipse id = ellipse_from_cov({1, 0, 1});
    CHECK(id.lambda1 == doctest::Approx(1.0));
    CHECK(id.lambda2 == doctest::Approx(1.0));
    CHECK(id.theta == 0.0); // tie-break convention

    // closed-form 2x2 eigensolver oracle
    const Ellipse rot = ellipse_from_cov({2.5, 1.5, 2.5});
    CHECK(rot.lambda1 == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(rot.lambda2 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rot.theta == doctest::Approx(kPi / 4).epsilon(1e-12));
}

TEST_CASE("ellipse_from_cov rejects non-SPD input with a named reason") {
    CHECK_THROWS_WITH_AS(ellipse_from_cov({-1, 0, 1}),
                         doctest::Contains("a <= 0"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(ellipse_from_cov({1, 0, -2}),
                         doctest::Contains("c <= 0"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(ellipse_from_cov({1, 2, 1}),
                         doctest::Contains("det <= 0"), std::invalid_argument);
}

TEST_CASE("ellipse <-> covariance round trip") {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 1000; ++i) {
        const Ellipse e = random_ellipse(rng);
        const Spd2 s = cov_from_ellipse(e);
        const Ellipse back = ellipse_from_cov(s);
        const Spd2 s2 = cov_from_ellipse(back);
        const double frob = std::sqrt((s.a - s2.a) * (s.a - s2.a) +
                                      2 * (s.b - s2.b) * (s.b - s2.b) +
                                      (s.c - s2.c) * (s.c - s2.c));
        CHECK(frob < 1e-9);
        CHECK(back.lambda1 >= back.lambda2);
        CHECK(back.theta >= -kPi / 2);
        CHECK(back.theta < kPi / 2);
    }
}

TEST_CASE("affine distance basics") {
    const Spd2 id{1, 0, 1};
    CHECK(affine_distance(id, id) == doctest::Approx(0.0));

    const double e2 = std::exp(2.0);
    const Spd2 scaled{e2, 0, e2};
    // log eigenvalues are (2, 2); Frobenius norm oracle
    CHECK(affine_distance(id, scaled) ==
          doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-12));

    const Spd2 s1{3, 1, 2}, s2{5, -1, 4};
    CHECK(affine_distance(s1, s2) ==
          doctest::Approx(affine_distance(s2, s1)).epsilon(1e-12));

    CHECK_THROWS_AS(affine_distance({-1, 0, 1}, id), std::invalid_argument);
    CHECK_THROWS_AS(affine_distance(id, {1, 2, 1}), std::invalid_argument);
}

TEST_CASE("affine distance is congruence invariant") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 200; ++i) {
        const Spd2 s1 = cov_from_ellipse(random_ellipse(rng));
        const Spd2 s2 = cov_from_ellipse(random_ellipse(rng));
        // random invertible A
        Eigen::Matrix2d a;
        do {
            a << u(rng), u(rng), u(rng), u(rng);
        } while (std::abs(a.determinant()) < 0.1);
        const Eigen::Matrix2d t1 = a.transpose() * s1.matrix() * a;
        const Eigen::Matrix2d t2 = a.transpose() * s2.matrix() * a;
        const double d = affine_distance(s1, s2);
        const double dt = affine_distance({t1(0, 0), t1(0, 1), t1(1, 1)},
                                          {t2(0, 0), t2(0, 1), t2(1, 1)});
        CHECK(d == doctest::Approx(dt).epsilon(1e-9));
    }
}

TEST_CASE("product coordinates") {
    const ProductCoords c0 = product_coords({1, 1, 0});
    CHECK(c0.mu1 == doctest::Approx(0.0));
    CHECK(c0.mu2 == doctest::Approx(0.0));

    const ProductCoords c1 = product_coords({std::exp(1.0), 1, 0.3});
    CHECK(c1.mu1 == doctest::Approx(1.0));
    CHECK(c1.mu2 == doctest::Approx(0.0));
    CHECK(c1.theta == doctest::Approx(0.3));

    std::mt19937_64 rng(31);
    for (int i = 0; i < 500; ++i) {
        const Ellipse e = random_ellipse(rng);
        const Ellipse back = ellipse_from_product_coords(product_coords(e));
        CHECK(back.lambda1 == doctest::Approx(e.lambda1).epsilon(1e-12));
        CHECK(back.lambda2 == doctest::Approx(e.lambda2).epsilon(1e-12));
        CHECK(back.theta == doctest::Approx(e.theta).epsilon(1e-12));
    }
}

TEST_CASE("coupled metric matches affine distance to first order") {
    // The testable content of the tangent-space approximation: displace an
    // ellipse in log coordinates by norm <= 0.01 and compare the metric
    // length against the exact geodesic distance.
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> axis(1.0, 8.0);
    std::uniform_real_distribution<double> angle(-kPi / 2, kPi / 2);
    std::uniform_real_distribution<double> mag(1e-4, 0.01);
    std::normal_distribution<double> dir(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        double l1 = axis(rng);
        double l2 = l1 / (1.2 + 3.0 * std::uniform_real_distribution<double>(
                                          0, 1)(rng)); // aspect >= 1.2
        const Ellipse base{l1, l2, angle(rng)};

        Eigen::Vector3d d(dir(rng), dir(rng), dir(rng));
        d = d / d.norm() * mag(rng);

        const Ellipse moved{std::exp(std::log(l1) + d[0]),
                            std::exp(std::log(l2) + d[1]), base.theta + d[2]};
        const double exact =
            affine_distance(cov_from_ellipse(base), cov_from_ellipse(moved));
        const double approx = coupled_metric_length(base, d[0], d[1], d[2]);
        CHECK(std::abs(exact - approx) <= 0.10 * exact);
    }
}

TEST_CASE("wrap_angle") {
    CHECK(wrap_angle(0.0) == doctest::Approx(0.0));
    CHECK(wrap_angle(3 * kPi) == doctest::Approx(-kPi));
    CHECK(wrap_angle(-kPi - 0.1) == doctest::Approx(kPi - 0.1));
    CHECK(wrap_angle(kPi) == doctest::Approx(-kPi)); // half-open range
    CHECK_THROWS_AS(wrap_angle(std::nan("")), std::invalid_argument);
    CHECK_THROWS_AS(wrap_angle(INFINITY), std::invalid_argument);
}

TEST_CASE("angle_diff_pi_periodic takes the short pi-periodic path") {
    CHECK(angle_diff_pi_periodic(0.1, 0.0) == doctest::Approx(0.1));
    // wraps across the seam, not the 0.9 pi Euclidean path
    CHECK(angle_diff_pi_periodic(kPi / 2 - 0.05, -kPi / 2 + 0.05) ==
          doctest::Approx(-0.1));
    CHECK(angle_diff_pi_periodic(0.4 + kPi, 0.4) == doctest::Approx(0.0));

    std::mt19937_64 rng(53);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int i = 0; i < 1000; ++i) {
        const double a = u(rng), b = u(rng);
        const double d = angle_diff_pi_periodic(a, b);
        CHECK(std::abs(d) <= kPi / 2);
        // a == b + d (mod pi)
        const double r = std::remainder(a - b - d, kPi);
        CHECK(std::abs(r) < 1e-9);
    }
}

TEST_CASE("weighted stats: zero decay equals the plain sample moments") {
    std::vector<Event> events;
    for (int i = 0; i < 50; ++i) {
        events.push_back({1000, std::uint16_t(100 + i % 7), std::uint16_t(200 + i % 5), 1});
    }
    const WeightedStats ws = weighted_blob_stats(events, 1000, 800.0);
    double mx = 0, my = 0;
    for (const auto& e : events) {
        mx += e.x;
        my += e.y;
    }
    mx /= events.size();
    my /= events.size();
    CHECK(ws.mean.x() == doctest::Approx(mx).epsilon(1e-12));
    CHECK(ws.mean.y() == doctest::Approx(my).epsilon(1e-12));
    CHECK(ws.count == events.size());
}

TEST_CASE("weighted stats: hand-computed two-point oracle") {
    // events at (0,0) one second old and (10,0) now, beta = ln 2 per second:
    // weights (1/2, 1) normalize to (1/3, 2/3), mean (20/3, 0)
    const std::vector<Event> events = {{0, 0, 0, 1}, {1000000, 10, 0, 1}};
    const WeightedStats ws =
        weighted_blob_stats(events, 1000000, std::log(2.0));
    CHECK(ws.mean.x() == doctest::Approx(20.0 / 3.0).epsilon(1e-9));
    CHECK(ws.mean.y() == doctest::Approx(0.0));
    CHECK(ws.weight_sum == doctest::Approx(1.5).epsilon(1e-9));
}

TEST_CASE("weighted stats: single event hits the covariance floor") {
    const std::vector<Event> events = {{500, 42, 17, -1}};
    const WeightedStats ws = weighted_blob_stats(events, 500, 1500.0);
    CHECK(ws.mean.x() == doctest::Approx(42.0));
    CHECK(ws.mean.y() == doctest::Approx(17.0));
    CHECK(ws.cov.a == doctest::Approx(kCovFloorSigma * kCovFloorSigma));
    CHECK(ws.cov.b == doctest::Approx(0.0));
    CHECK(ws.cov.c == doctest::Approx(kCovFloorSigma * kCovFloorSigma));
}

TEST_CASE("weighted stats: streaming equals the two-pass definition") {
    std::mt19937_64 rng(67);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 10 + rng() % 10000;
        std::vector<Event> events;
        std::uint64_t t = rng() % 1000;
        for (std::size_t i = 0; i < n; ++i) {
            t += rng() % 20;
            events.push_back({t, std::uint16_t(rng() % 1280),
                              std::uint16_t(rng() % 720),
                              std::int8_t(rng() % 2 ? 1 : -1)});
        }
        const std::uint64_t t_k = t + rng() % 500;
        const double beta = 100.0 + double(rng() % 3000);
        const WeightedStats ws = weighted_blob_stats(events, t_k, beta);

        // Two-pass definition with normalized weights; decay factors built
        // the same way as the streaming path so only the summation order
        // differs.
        double wsum = 0;
        const std::uint64_t t_newest = events.back().t_us;
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i) {
            w[i] = std::exp(-beta * double(t_newest - events[i].t_us) * 1e-6);
            wsum += w[i];
        }
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += w[i] / wsum * events[i].x;
            my += w[i] / wsum * events[i].y;
        }
        double ca = 0, cb = 0, cc = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dx = events[i].x - mx, dy = events[i].y - my;
            ca += w[i] / wsum * dx * dx;
            cb += w[i] / wsum * dx * dy;
            cc += w[i] / wsum * dy * dy;
        }
        const double floor_var = kCovFloorSigma * kCovFloorSigma;
        const double mid = 0.5 * (ca + cc);
        const double rad = std::hypot(0.5 * (ca - cc), cb);
        if (mid - rad < floor_var) {
            ca += floor_var;
            cc += floor_var;
        }

        CHECK(ws.mean.x() == doctest::Approx(mx).epsilon(1e-9));
        CHECK(ws.mean.y() == doctest::Approx(my).epsilon(1e-9));
        CHECK(ws.cov.a == doctest::Approx(ca).epsilon(1e-9));
        CHECK(ws.cov.b == doctest::Approx(cb).epsilon(1e-9).scale(1.0));
        CHECK(ws.cov.c == doctest::Approx(cc).epsilon(1e-9));
    }
}

TEST_CASE("weighted stats: larger beta favors newer events more strongly") {
    const std::vector<Event> events = {{0, 0, 0, 1}, {2000, 10, 0, 1}};
    double prev_ratio = 0.0;
    for (double beta : {100.0, 500.0, 1500.0, 4000.0}) {
        const WeightedStats ws = weighted_blob_stats(events, 2000, beta);
        // mean slides toward the newer event at x=10 as beta grows
        const double ratio = ws.mean.x();
        CHECK(ratio > prev_ratio);
        prev_ratio = ratio;
    }
}

TEST_CASE("weighted stats rejects bad input") {
    CHECK_THROWS_AS(weighted_blob_stats({}, 0, 500.0), std::invalid_argument);
    const std::vector<Event> events = {{1000, 1, 1, 1}};
    CHECK_THROWS_AS(weighted_blob_stats(events, 500, 500.0),
                    std::invalid_argument);
}
