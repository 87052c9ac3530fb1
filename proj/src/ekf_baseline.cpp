#include "evlink/ekf_baseline.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include <Eigen/LU>

namespace evlink {

namespace {

Eigen::MatrixXd process_noise_rate(const EkfParams& p) {
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(8, 8);
    q(0, 0) = p.q_pos;
    q(1, 1) = p.q_pos;
    q(2, 2) = p.q_vel;
    q(3, 3) = p.q_vel;
    q(4, 4) = p.q_theta;
    q(5, 5) = p.q_rate;
    q(6, 6) = p.q_axis;
    q(7, 7) = p.q_axis;
    q(6, 7) = p.q_axis_corr * p.q_axis;
    q(7, 6) = q(6, 7);
    return q;
}

void predict_in_place(EkfState& s, double dt_s, const EkfParams& params) {
    if (dt_s <= 0.0) return;
    Eigen::MatrixXd f = Eigen::MatrixXd::Identity(8, 8);
    f(0, 2) = dt_s;
    f(1, 3) = dt_s;
    f(4, 5) = dt_s; // theta advances with q, no wrapping anywhere
    s.x = f * s.x;
    s.cov = f * s.cov * f.transpose() + process_noise_rate(params) * dt_s;
}

Spd2 floored_spd(const Eigen::Matrix2d& m) {
    Spd2 c{m(0, 0), 0.5 * (m(0, 1) + m(1, 0)), m(1, 1)};
    const double mid = 0.5 * (c.a + c.c);
    const double rad = std::hypot(0.5 * (c.a - c.c), c.b);
    const double floor_var = kCovFloorSigma * kCovFloorSigma;
    if (mid - rad < floor_var) {
        c.a += floor_var;
        c.c += floor_var;
    }
    return c;
}

} // namespace

EkfState::EkfState()
    : x(Eigen::VectorXd::Zero(8)),
      cov(Eigen::MatrixXd::Identity(8, 8)),
      shape_cov(Eigen::Matrix2d::Identity()) {}

EkfState ekf_process_event(const EkfState& state, const Event& e,
                           const EkfParams& params) {
    if (e.t_us < state.t_us) {
        throw std::invalid_argument("ekf: event precedes state time");
    }
    if (!state.x.allFinite() || !state.cov.allFinite()) {
        throw std::invalid_argument("ekf: non-finite state");
    }

    EkfState s = state;
    predict_in_place(s, double(e.t_us - state.t_us) * 1e-6, params);
    s.t_us = e.t_us;

    // Shape tracking: forgetting covariance of residuals about the predicted
    // center, then an eigen-decomposition for the axis/orientation measurement.
    const Eigen::Vector2d r(double(e.x), double(e.y));
    const Eigen::Vector2d delta = r - Eigen::Vector2d(s.x[0], s.x[1]);
    s.shape_cov = params.forgetting * s.shape_cov +
                  (1.0 - params.forgetting) * (delta * delta.transpose());
    const Ellipse shape_meas = ellipse_from_cov(floored_spd(s.shape_cov));

    // z = [ex, ey, lambda1, lambda2, theta]; everything treated as flat
    // Euclidean quantities, orientation included.
    Eigen::VectorXd z(5);
    z << r.x(), r.y(), shape_meas.lambda1, shape_meas.lambda2, shape_meas.theta;

    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(5, 8);
    h(0, 0) = 1.0;
    h(1, 1) = 1.0;
    h(2, 6) = 1.0;
    h(3, 7) = 1.0;
    h(4, 4) = 1.0;

    const Ellipse blob{std::max(s.x[6], 0.1), std::max(s.x[7], 0.1), s.x[4]};
    const Spd2 blob_cov = cov_from_ellipse(blob);
    Eigen::MatrixXd rm = Eigen::MatrixXd::Zero(5, 5);
    rm(0, 0) = blob_cov.a;
    rm(0, 1) = blob_cov.b;
    rm(1, 0) = blob_cov.b;
    rm(1, 1) = blob_cov.c;
    rm(2, 2) = params.r_axis;
    rm(3, 3) = params.r_axis;
    rm(2, 3) = params.r_axis_corr * params.r_axis;
    rm(3, 2) = rm(2, 3);
    rm(4, 4) = params.r_theta;

    const Eigen::VectorXd innovation = z - h * s.x;
    const Eigen::MatrixXd sm = h * s.cov * h.transpose() + rm;
    const Eigen::MatrixXd gain = s.cov * h.transpose() * sm.inverse();
    s.x += gain * innovation;
    s.cov = (Eigen::MatrixXd::Identity(8, 8) - gain * h) * s.cov;
    s.cov = 0.5 * (s.cov + s.cov.transpose()).eval();

    for (int i : {6, 7}) {
        if (s.x[i] <= 0.0) {
            s.x[i] = 0.1;
            ++s.clamp_count;
        }
    }
    return s;
}

EkfState ekf_step(const EkfState& state, const EventPacket& packet,
                  const EkfParams& params) {
    if (packet.t_start_us < state.t_us) {
        throw std::invalid_argument("ekf: packet precedes state time");
    }
    const auto tic = std::chrono::steady_clock::now();
    EkfState s = state;
    for (const Event& e : packet.events) {
        s = ekf_process_event(s, e, params);
    }
    predict_in_place(s, double(packet.t_end_us - s.t_us) * 1e-6, params);
    s.t_us = packet.t_end_us;
    const auto toc = std::chrono::steady_clock::now();
    s.last_step_us = std::chrono::duration<double, std::micro>(toc - tic).count();
    return s;
}

std::optional<EkfState> ekf_acquire(const EventPacket& packet,
                                    double beta_decay, std::uint32_t n_min) {
    if (packet.events.size() < n_min) return std::nullopt;
    const WeightedStats stats =
        weighted_blob_stats(packet.events, packet.t_end_us, beta_decay);
    const Ellipse e = ellipse_from_cov(stats.cov);

    EkfState s;
    s.x << stats.mean.x(), stats.mean.y(), 0.0, 0.0, e.theta, 0.0, e.lambda1,
        e.lambda2;
    s.cov = Eigen::MatrixXd::Zero(8, 8);
    s.cov.diagonal() << 25.0, 25.0, 1e6, 1e6, 1.0, 10.0, 9.0, 9.0;
    s.shape_cov = stats.cov.matrix();
    s.t_us = packet.t_end_us;
    return s;
}

} // namespace evlink
