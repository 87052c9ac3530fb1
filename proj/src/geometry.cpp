#include "evlink/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace evlink {

namespace {
constexpr double kPi = std::numbers::pi;

void require_spd(const Spd2& s, const char* who) {
    if (!(s.a > 0.0)) {
        throw std::invalid_argument(std::string(who) +
                                    ": matrix not SPD (a <= 0)");
    }
    if (!(s.c > 0.0)) {
        throw std::invalid_argument(std::string(who) +
                                    ": matrix not SPD (c <= 0)");
    }
    if (!(s.a * s.c - s.b * s.b > 0.0)) {
        throw std::invalid_argument(std::string(who) +
                                    ": matrix not SPD (det <= 0)");
    }
}
} // namespace

Spd2 cov_from_ellipse(const Ellipse& e) {
    const double l1sq = e.lambda1 * e.lambda1;
    const double l2sq = e.lambda2 * e.lambda2;
    const double ct = std::cos(e.theta);
    const double st = std::sin(e.theta);
    Spd2 s;
    s.a = l1sq * ct * ct + l2sq * st * st;
    s.c = l1sq * st * st + l2sq * ct * ct;
    s.b = (l1sq - l2sq) * st * ct;
    return s;
}

Ellipse ellipse_from_cov(const Spd2& s) {
    require_spd(s, "ellipse_from_cov");
    const double mid = 0.5 * (s.a + s.c);
    const double rad = std::hypot(0.5 * (s.a - s.c), s.b);
    const double e1 = mid + rad;
    const double e2 = std::max(mid - rad, 0.0);

    Ellipse e;
    e.lambda1 = std::sqrt(e1);
    e.lambda2 = std::sqrt(e2);
    if (rad == 0.0) {
        e.theta = 0.0; // circular: orientation unobservable, fixed convention
        return e;
    }
    double theta = 0.5 * std::atan2(2.0 * s.b, s.a - s.c);
    if (theta >= kPi / 2.0) theta -= kPi;
    if (theta < -kPi / 2.0) theta += kPi;
    e.theta = theta;
    return e;
}

double affine_distance(const Spd2& s1, const Spd2& s2) {
    require_spd(s1, "affine_distance");
    require_spd(s2, "affine_distance");
    // Eigenvalues of s1^{-1} s2 equal those of s1^{-1/2} s2 s1^{-1/2}.
    const double det1 = s1.a * s1.c - s1.b * s1.b;
    const double m00 = (s1.c * s2.a - s1.b * s2.b) / det1;
    const double m01 = (s1.c * s2.b - s1.b * s2.c) / det1;
    const double m10 = (s1.a * s2.b - s1.b * s2.a) / det1;
    const double m11 = (s1.a * s2.c - s1.b * s2.b) / det1;
    const double tr = m00 + m11;
    const double det = m00 * m11 - m01 * m10;
    const double disc = std::max(0.25 * tr * tr - det, 0.0);
    const double root = std::sqrt(disc);
    const double g1 = 0.5 * tr + root;
    const double g2 = 0.5 * tr - root;
    if (!(g1 > 0.0) || !(g2 > 0.0)) {
        throw std::invalid_argument("affine_distance: SPD pencil degenerate");
    }
    const double l1 = std::log(g1);
    const double l2 = std::log(g2);
    return std::sqrt(l1 * l1 + l2 * l2);
}

ProductCoords product_coords(const Ellipse& e) {
    return {std::log(e.lambda1), std::log(e.lambda2), e.theta};
}

Ellipse ellipse_from_product_coords(const ProductCoords& c) {
    return {std::exp(c.mu1), std::exp(c.mu2), c.theta};
}

double coupled_metric_length(const Ellipse& base, double dmu1, double dmu2,
                             double dtheta) {
    const double l1sq = base.lambda1 * base.lambda1;
    const double l2sq = base.lambda2 * base.lambda2;
    const double ecc = (l1sq - l2sq) / (base.lambda1 * base.lambda2);
    return std::sqrt(4.0 * dmu1 * dmu1 + 4.0 * dmu2 * dmu2 +
                     2.0 * ecc * ecc * dtheta * dtheta);
}

double wrap_angle(double theta) {
    if (!std::isfinite(theta)) {
        throw std::invalid_argument("wrap_angle: non-finite angle");
    }
    double r = std::fmod(theta + kPi, 2.0 * kPi);
    if (r < 0.0) r += 2.0 * kPi;
    return r - kPi;
}

double angle_diff_pi_periodic(double a, double b) {
    if (!std::isfinite(a) || !std::isfinite(b)) {
        throw std::invalid_argument("angle_diff_pi_periodic: non-finite angle");
    }
    double r = std::fmod(a - b + kPi / 2.0, kPi);
    if (r < 0.0) r += kPi;
    return r - kPi / 2.0;
}

WeightedStats weighted_blob_stats(std::span<const Event> events,
                                  std::uint64_t t_k_us, double beta_per_s,
                                  double floor_sigma) {
    if (events.empty()) {
        throw std::invalid_argument("weighted_blob_stats: empty event list");
    }
    if (t_k_us < events.back().t_us) {
        throw std::invalid_argument(
            "weighted_blob_stats: t_k earlier than newest event");
    }

    // Single pass in time order with incremental decay: accumulators carry
    // weights relative to the running time, so each step multiplies by
    // exp(-beta*dt) once (and not at all inside same-microsecond bursts).
    // Coordinates are taken relative to the first event to keep the raw
    // moments well-conditioned.
    WeightedStats out;
    const double ox = double(events.front().x);
    const double oy = double(events.front().y);
    double a_w = 0.0;
    double a_x = 0.0, a_y = 0.0;
    double a_xx = 0.0, a_xy = 0.0, a_yy = 0.0;
    std::uint64_t t_cur = events.front().t_us;

    // Decay factors for small integer-microsecond gaps, the common case
    // inside and between bursts.
    constexpr std::uint64_t kTableGaps = 64;
    double decay_table[kTableGaps + 1];
    decay_table[0] = 1.0;
    const double decay_1us = std::exp(-beta_per_s * 1e-6);
    for (std::uint64_t k = 1; k <= kTableGaps; ++k) {
        decay_table[k] = decay_table[k - 1] * decay_1us;
    }

    for (const Event& e : events) {
        if (e.t_us != t_cur) {
            if (e.t_us < t_cur) {
                throw std::invalid_argument(
                    "weighted_blob_stats: events not time-sorted");
            }
            const std::uint64_t gap = e.t_us - t_cur;
            const double f =
                gap <= kTableGaps
                    ? decay_table[gap]
                    : std::exp(-beta_per_s * double(gap) * 1e-6);
            a_w *= f;
            a_x *= f;
            a_y *= f;
            a_xx *= f;
            a_xy *= f;
            a_yy *= f;
            t_cur = e.t_us;
        }
        const double rx = double(e.x) - ox;
        const double ry = double(e.y) - oy;
        a_w += 1.0;
        a_x += rx;
        a_y += ry;
        a_xx += rx * rx;
        a_xy += rx * ry;
        a_yy += ry * ry;
    }
    // The loop leaves weights relative to the newest event; the extra decay
    // to t_k is a common factor that normalization cancels.
    const double mx = a_x / a_w;
    const double my = a_y / a_w;
    Eigen::Vector2d mean(ox + mx, oy + my);
    Eigen::Matrix2d cov;
    cov(0, 0) = a_xx / a_w - mx * mx;
    cov(0, 1) = a_xy / a_w - mx * my;
    cov(1, 0) = cov(0, 1);
    cov(1, 1) = a_yy / a_w - my * my;
    const double wsum = a_w;

    Spd2 c{cov(0, 0), cov(0, 1), cov(1, 1)};
    const double mid = 0.5 * (c.a + c.c);
    const double rad = std::hypot(0.5 * (c.a - c.c), c.b);
    const double floor_var = floor_sigma * floor_sigma;
    if (mid - rad < floor_var) {
        c.a += floor_var;
        c.c += floor_var;
    }

    out.mean = mean;
    out.cov = c;
    out.weight_sum = wsum;
    out.count = events.size();
    return out;
}

} // namespace evlink
