#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Core>

#include "evlink/events.hpp"
#include "evlink/geometry.hpp"

namespace evlink {

/// Tracked transmitter belief mean. Semi-axes are stored in log-space
/// (mu_i = log lambda_i), so reported axis lengths exp(mu_i) are positive by
/// construction; theta lives on the circle, wrapped to [-pi, pi).
struct BlobState {
    double x = 0.0;
    double y = 0.0;
    double vx = 0.0;
    double vy = 0.0;
    double mu1 = 0.0;
    double mu2 = 0.0;
    double theta = 0.0;
    double omega = 0.0;

    double lambda1() const;
    double lambda2() const;

    Eigen::Matrix<double, 8, 1> vector() const;
    static BlobState from_vector(const Eigen::Matrix<double, 8, 1>& v);
};

/// Blob measurement extracted from one packet: center, semi-axes in linear
/// pixels, orientation in [-pi/2, pi/2).
struct Measurement {
    double x = 0.0;
    double y = 0.0;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double theta = 0.0;
};

/// Sigma-point spread parameters plus noise covariances. Q is rate form
/// (added as Q*dt per prediction); R applies per measurement in tangent
/// coordinates (x, y, mu1, mu2, theta).
struct UkfParams {
    double alpha = 0.5;
    double beta_ukf = 2.0;
    double kappa = 0.0;
    Eigen::Matrix<double, 8, 8> Q;
    Eigen::Matrix<double, 5, 5> R;
    double beta_decay = 1500.0; // 1/s, temporal weight rate
    std::uint32_t n_min = 4;   // events required for a valid measurement
    double dlam_clamp = 0.2;   // per-step cap on the minor-axis increment
    double cov_floor_sigma = 0.5; // px, measurement covariance floor
    // acquisition covariance diagonal
    double init_pos = 25.0;    // px^2
    double init_vel = 1e6;     // (px/s)^2
    double init_logaxis = 0.25;
    double init_theta = 1.0;   // rad^2
    double init_omega = 10.0;  // (rad/s)^2

    UkfParams();
};

/// State mean + covariance in tangent coordinates, with the short history of
/// posterior minor-axis values the process model consumes.
struct FilterBelief {
    BlobState mean;
    Eigen::Matrix<double, 8, 8> cov = Eigen::Matrix<double, 8, 8>::Identity();
    std::uint64_t t_us = 0;
    // mu2 posteriors: [0] = k-2, [1] = k-1.
    double mu2_history[2] = {0.0, 0.0};
    int history_len = 0;
    double last_step_us = 0.0; // wall-clock of the latest step() call
};

/// log(lambda_minor[k-1] / lambda_minor[k-2]) from the belief history,
/// clamped to +-dlam_clamp; 0 until two updates have happened.
double minor_axis_increment(const FilterBelief& belief, double clamp = 0.2);

/// Sigma-point propagation through the constant-velocity process model:
/// axes shift in log-space by the minor-axis increment, orientation advances
/// with angular velocity and wraps on the circle (circular mean across sigma
/// points). Adds Q*dt. Throws std::invalid_argument naming a non-finite
/// state field.
FilterBelief predict(const FilterBelief& belief, double dt_s,
                     const UkfParams& params);

/// Temporally weighted blob measurement, absent for packets smaller than
/// n_min events.
std::optional<Measurement> make_measurement(const EventPacket& packet,
                                            std::uint64_t t_k_us,
                                            const UkfParams& params);

/// UKF measurement update in tangent coordinates. The orientation innovation
/// takes the pi-periodic short path; axes stay positive by construction.
/// Axes re-canonicalize (swap + quarter-turn) when the update leaves
/// mu1 < mu2. Throws std::runtime_error when the innovation covariance is
/// not invertible.
FilterBelief update(const FilterBelief& belief, const Measurement& z,
                    const UkfParams& params);

/// predict to packet end, then update when the packet yields a measurement.
/// Appends the posterior mu2 to the history and records the wall-clock cost.
FilterBelief step(const FilterBelief& belief, const EventPacket& packet,
                  const UkfParams& params);

/// Seeds a belief from the first usable packet: weighted stats, zero
/// velocities, broad diagonal covariance. Absent when the packet has fewer
/// than n_min events.
std::optional<FilterBelief> acquire(const EventPacket& packet,
                                    const UkfParams& params);

} // namespace evlink
