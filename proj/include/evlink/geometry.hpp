#pragma once

#include <cstdint>
#include <span>

#include <Eigen/Core>

#include "evlink/events.hpp"

namespace evlink {

/// Ellipse in canonical form: lambda1 >= lambda2 > 0 (semi-axes, px),
/// theta in [-pi/2, pi/2) (orientation has period pi).
struct Ellipse {
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double theta = 0.0;
};

/// Symmetric positive definite 2x2 matrix [[a, b], [b, c]].
struct Spd2 {
    double a = 1.0;
    double b = 0.0;
    double c = 1.0;

    Eigen::Matrix2d matrix() const {
        Eigen::Matrix2d m;
        m << a, b, b, c;
        return m;
    }
};

/// Temporally weighted first and second moments of an event cluster.
/// `weight_sum` is the raw (pre-normalization) sum with the newest event
/// carrying weight 1.
struct WeightedStats {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Spd2 cov;
    double weight_sum = 0.0;
    std::size_t count = 0;
};

/// Additive covariance floor: sigma_min^2 * I is added whenever the smallest
/// eigenvalue drops below sigma_min^2, so degenerate clusters still yield a
/// valid SPD measurement.
inline constexpr double kCovFloorSigma = 0.5;

/// Sigma = R(theta) diag(l1^2, l2^2) R(theta)^T.
Spd2 cov_from_ellipse(const Ellipse& e);

/// Closed-form 2x2 eigendecomposition (half-angle of atan2(2b, a-c)).
/// Equal eigenvalues tie-break to theta = 0. Throws std::invalid_argument
/// naming the violated invariant when `s` is not SPD.
Ellipse ellipse_from_cov(const Spd2& s);

/// Geodesic distance under the affine-invariant metric:
/// ||log(s1^{-1/2} s2 s1^{-1/2})||_F. Throws on non-SPD input.
double affine_distance(const Spd2& s1, const Spd2& s2);

/// Log-coordinates on the product manifold: (log l1, log l2, theta).
struct ProductCoords {
    double mu1 = 0.0;
    double mu2 = 0.0;
    double theta = 0.0;
};
ProductCoords product_coords(const Ellipse& e);
Ellipse ellipse_from_product_coords(const ProductCoords& c);

/// First-order length of the displacement (dmu1, dmu2, dtheta) measured at
/// `base`: sqrt(4 dmu1^2 + 4 dmu2^2 + 2((l1^2-l2^2)/(l1 l2))^2 dtheta^2).
/// Matches affine_distance to first order for small displacements.
double coupled_metric_length(const Ellipse& base, double dmu1, double dmu2,
                             double dtheta);

/// Wraps to [-pi, pi). Throws std::invalid_argument on non-finite input.
double wrap_angle(double theta);

/// Smallest-magnitude d with a = b + d (mod pi), in [-pi/2, pi/2).
/// The shorter path for pi-periodic ellipse orientations.
double angle_diff_pi_periodic(double a, double b);

/// Temporally weighted blob statistics (single pass, O(1) state): weight
/// exp(-beta_per_s * age) per event, normalized before the moments.
/// Covariance is floored to SPD by adding floor_sigma^2 * I when needed.
/// Events must be time-sorted (every packet is). Throws on an empty list,
/// unsorted events, or t_k earlier than the newest event.
WeightedStats weighted_blob_stats(std::span<const Event> events,
                                  std::uint64_t t_k_us, double beta_per_s,
                                  double floor_sigma = kCovFloorSigma);

} // namespace evlink
