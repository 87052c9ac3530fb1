#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Core>

#include "evlink/events.hpp"
#include "evlink/geometry.hpp"

namespace evlink {

/// Noise configuration for the per-event EKF. The axis block of Q carries a
/// common-scale correlation (depth changes move both axes together), the
/// Euclidean counterpart of the batch filter's shared minor-axis increment.
struct EkfParams {
    double forgetting = 0.99; // shape-covariance window factor, per event
    double q_pos = 1.0;       // px^2 / s
    double q_vel = 1e8;       // (px/s)^2 / s
    double q_theta = 0.05;    // rad^2 / s
    double q_rate = 1.0;      // (rad/s)^2 / s
    double q_axis = 50.0;     // px^2 / s
    double q_axis_corr = 0.9; // correlation between the two axis entries
    double r_axis = 1.0;      // px^2
    // Eigenvalues of a noisy sample covariance repel, so the two axis
    // measurements carry anti-correlated errors.
    double r_axis_corr = -0.5;
    double r_theta = 0.05;    // rad^2
};

/// Baseline blob state: axes in linear pixels, orientation as a plain
/// Euclidean angle (unwrapped, deliberately). State order
/// [x, y, vx, vy, theta, q, lambda1, lambda2].
struct EkfState {
    Eigen::VectorXd x;   // 8
    Eigen::MatrixXd cov; // 8x8
    Eigen::Matrix2d shape_cov; // forgetting covariance of event residuals
    std::uint64_t t_us = 0;
    std::uint64_t clamp_count = 0; // axis values forced back above zero
    double last_step_us = 0.0;

    EkfState();

    double px() const { return x[0]; }
    double py() const { return x[1]; }
    double theta() const { return x[4]; }
    double lambda1() const { return x[6]; }
    double lambda2() const { return x[7]; }
};

/// One predict + update for a single event: the event position is the
/// measurement (noise = current blob shape), and the axes/orientation track
/// the eigen-decomposition of the forgetting residual covariance. Axes that
/// land at or below zero are clamped to 0.1 px and counted. Throws on a
/// non-finite state.
EkfState ekf_process_event(const EkfState& state, const Event& e,
                           const EkfParams& params);

/// Folds ekf_process_event over the packet in order (per-event latency is
/// the defining property of this baseline); empty packets predict only.
/// Records the wall-clock cost of the packet.
EkfState ekf_step(const EkfState& state, const EventPacket& packet,
                  const EkfParams& params);

/// Seeds from weighted packet statistics, mirroring the batch filter's
/// acquisition rule. Absent when the packet has fewer than n_min events.
std::optional<EkfState> ekf_acquire(const EventPacket& packet,
                                    double beta_decay, std::uint32_t n_min);

} // namespace evlink
