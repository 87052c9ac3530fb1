#include "evlink/gaukf.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace evlink {

namespace {

using Vec8 = Eigen::Matrix<double, 8, 1>;
using Mat8 = Eigen::Matrix<double, 8, 8>;
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;
using Mat85 = Eigen::Matrix<double, 8, 5>;

constexpr double kPi = std::numbers::pi;
constexpr int kN = 8;
constexpr int kSigma = 2 * kN + 1;
constexpr int kTheta = 6; // angular component index in the state vector

struct UtWeights {
    double scale;           // sqrt(n + lambda)
    double wm0, wc0, wi;
};

UtWeights ut_weights(const UkfParams& p) {
    if (!(p.alpha > 0.0 && p.alpha <= 1.0)) {
        throw std::invalid_argument("gaukf: alpha must be in (0, 1]");
    }
    for (int i = 0; i < kN; ++i) {
        if (!(p.Q(i, i) > 0.0)) {
            throw std::invalid_argument("gaukf: Q diagonal must be positive");
        }
    }
    const double lam = p.alpha * p.alpha * (kN + p.kappa) - kN;
    const double denom = kN + lam;
    UtWeights w;
    w.scale = std::sqrt(denom);
    w.wm0 = lam / denom;
    w.wc0 = w.wm0 + (1.0 - p.alpha * p.alpha + p.beta_ukf);
    w.wi = 0.5 / denom;
    return w;
}

void check_finite(const FilterBelief& b) {
    const char* names[kN] = {"x", "y", "vx", "vy", "mu1", "mu2", "theta", "omega"};
    const Vec8 v = b.mean.vector();
    for (int i = 0; i < kN; ++i) {
        if (!std::isfinite(v[i])) {
            throw std::invalid_argument(std::string("gaukf: non-finite state field '") +
                                        names[i] + "'");
        }
    }
    if (!b.cov.allFinite()) {
        throw std::invalid_argument("gaukf: non-finite covariance");
    }
}

// Cholesky factor with escalating jitter; the covariance can sit on the PSD
// boundary after an update.
Mat8 sqrt_scaled_cov(const Mat8& cov, double scale) {
    Mat8 p = scale * scale * 0.5 * (cov + cov.transpose());
    double jitter = 0.0;
    for (int attempt = 0; attempt < 4; ++attempt) {
        Eigen::LLT<Mat8> llt(p + jitter * Mat8::Identity());
        if (llt.info() == Eigen::Success) {
            return llt.matrixL();
        }
        jitter = (jitter == 0.0) ? 1e-12 * std::max(1.0, p.trace()) : jitter * 100.0;
    }
    throw std::runtime_error("gaukf: covariance not positive semi-definite");
}

void draw_sigma_points(const FilterBelief& belief, const UtWeights& w,
                       Vec8 (&sigma)[kSigma]) {
    const Vec8 mean = belief.mean.vector();
    const Mat8 l = sqrt_scaled_cov(belief.cov, w.scale);
    sigma[0] = mean;
    for (int i = 0; i < kN; ++i) {
        sigma[1 + i] = mean + l.col(i);
        sigma[1 + kN + i] = mean - l.col(i);
        sigma[1 + i][kTheta] = wrap_angle(sigma[1 + i][kTheta]);
        sigma[1 + kN + i][kTheta] = wrap_angle(sigma[1 + kN + i][kTheta]);
    }
}

// Weighted mean with the angular component averaged on the circle.
Vec8 sigma_mean(const Vec8 (&sigma)[kSigma], const UtWeights& w) {
    Vec8 mean = Vec8::Zero();
    double s = 0.0, c = 0.0;
    for (int i = 0; i < kSigma; ++i) {
        const double wi = (i == 0) ? w.wm0 : w.wi;
        mean += wi * sigma[i];
        s += wi * std::sin(sigma[i][kTheta]);
        c += wi * std::cos(sigma[i][kTheta]);
    }
    mean[kTheta] = std::atan2(s, c);
    mean[kTheta] = wrap_angle(mean[kTheta]);
    return mean;
}

Vec8 state_residual(const Vec8& x, const Vec8& mean) {
    Vec8 d = x - mean;
    d[kTheta] = wrap_angle(x[kTheta] - mean[kTheta]);
    return d;
}

void canonicalize(Vec8& mean, Mat8& cov) {
    if (mean[4] < mean[5]) {
        std::swap(mean[4], mean[5]);
        cov.row(4).swap(cov.row(5));
        cov.col(4).swap(cov.col(5));
        mean[kTheta] = wrap_angle(mean[kTheta] + kPi / 2.0);
    }
}

} // namespace

double BlobState::lambda1() const { return std::exp(mu1); }
double BlobState::lambda2() const { return std::exp(mu2); }

Vec8 BlobState::vector() const {
    Vec8 v;
    v << x, y, vx, vy, mu1, mu2, theta, omega;
    return v;
}

BlobState BlobState::from_vector(const Vec8& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
}

UkfParams::UkfParams() {
    Q = Eigen::Matrix<double, 8, 8>::Zero();
    Q.diagonal() << 1.0, 1.0, 1e8, 1e8, 0.01, 0.01, 0.05, 1.0;
    R = Eigen::Matrix<double, 5, 5>::Zero();
    R.diagonal() << 1.0, 1.0, 0.02, 0.02, 0.05;
}

double minor_axis_increment(const FilterBelief& belief, double clamp) {
    if (belief.history_len < 2) return 0.0;
    const double d = belief.mu2_history[1] - belief.mu2_history[0];
    return std::clamp(d, -clamp, clamp);
}

FilterBelief predict(const FilterBelief& belief, double dt_s,
                     const UkfParams& params) {
    if (!(dt_s > 0.0)) {
        throw std::invalid_argument("gaukf: predict needs dt > 0");
    }
    check_finite(belief);

    const double dlam = minor_axis_increment(belief, params.dlam_clamp);
    const UtWeights w = ut_weights(params);
    Vec8 sigma[kSigma];
    draw_sigma_points(belief, w, sigma);

    for (Vec8& s : sigma) {
        s[0] += s[2] * dt_s;
        s[1] += s[3] * dt_s;
        s[4] += dlam;
        s[5] += dlam;
        s[kTheta] = std::atan2(std::sin(s[kTheta] + s[7] * dt_s),
                               std::cos(s[kTheta] + s[7] * dt_s));
        if (s[kTheta] >= kPi) s[kTheta] = -kPi; // atan2 can return +pi
    }

    const Vec8 mean = sigma_mean(sigma, w);
    Mat8 cov = Mat8::Zero();
    for (int i = 0; i < kSigma; ++i) {
        const Vec8 d = state_residual(sigma[i], mean);
        cov += ((i == 0) ? w.wc0 : w.wi) * d * d.transpose();
    }
    cov += params.Q * dt_s;
    cov = 0.5 * (cov + cov.transpose().eval());

    FilterBelief out = belief;
    out.mean = BlobState::from_vector(mean);
    out.cov = cov;
    out.t_us = belief.t_us + std::uint64_t(std::llround(dt_s * 1e6));
    return out;
}

std::optional<Measurement> make_measurement(const EventPacket& packet,
                                            std::uint64_t t_k_us,
                                            const UkfParams& params) {
    if (packet.events.size() < params.n_min) {
        return std::nullopt;
    }
    const WeightedStats stats = weighted_blob_stats(
        packet.events, t_k_us, params.beta_decay, params.cov_floor_sigma);
    const Ellipse e = ellipse_from_cov(stats.cov);
    return Measurement{stats.mean.x(), stats.mean.y(), e.lambda1, e.lambda2,
                       e.theta};
}

FilterBelief update(const FilterBelief& belief, const Measurement& z,
                    const UkfParams& params) {
    check_finite(belief);
    if (!(z.lambda1 > 0.0) || !(z.lambda2 > 0.0)) {
        throw std::invalid_argument("gaukf: measurement axes must be positive");
    }

    for (int i = 0; i < 5; ++i) {
        if (!(params.R(i, i) > 0.0)) {
            throw std::invalid_argument("gaukf: R diagonal must be positive");
        }
    }
    const UtWeights w = ut_weights(params);
    Vec8 sigma[kSigma];
    draw_sigma_points(belief, w, sigma);

    // h(x) = (x, y, mu1, mu2, theta): tangent-space measurement map.
    Vec5 zsig[kSigma];
    double s = 0.0, c = 0.0;
    Vec5 zhat = Vec5::Zero();
    for (int i = 0; i < kSigma; ++i) {
        zsig[i] << sigma[i][0], sigma[i][1], sigma[i][4], sigma[i][5],
            sigma[i][kTheta];
        const double wi = (i == 0) ? w.wm0 : w.wi;
        zhat += wi * zsig[i];
        s += wi * std::sin(zsig[i][4]);
        c += wi * std::cos(zsig[i][4]);
    }
    zhat[4] = wrap_angle(std::atan2(s, c));

    const Vec8 mean = belief.mean.vector();
    Mat5 szz = params.R;
    Mat85 cxz = Mat85::Zero();
    for (int i = 0; i < kSigma; ++i) {
        Vec5 dz = zsig[i] - zhat;
        dz[4] = wrap_angle(zsig[i][4] - zhat[4]);
        const Vec8 dx = state_residual(sigma[i], mean);
        const double wi = (i == 0) ? w.wc0 : w.wi;
        szz += wi * dz * dz.transpose();
        cxz += wi * dx * dz.transpose();
    }

    Eigen::LLT<Mat5> llt(szz);
    if (llt.info() != Eigen::Success) {
        throw std::runtime_error(
            "gaukf: innovation covariance not invertible (degenerate Q/R)");
    }
    const Mat85 gain = llt.solve(cxz.transpose()).transpose();

    Vec5 innovation;
    innovation << z.x - zhat[0], z.y - zhat[1], std::log(z.lambda1) - zhat[2],
        std::log(z.lambda2) - zhat[3], angle_diff_pi_periodic(z.theta, zhat[4]);

    Vec8 post_mean = mean + gain * innovation;
    post_mean[kTheta] = wrap_angle(post_mean[kTheta]);
    Mat8 post_cov = belief.cov - gain * szz * gain.transpose();
    post_cov = 0.5 * (post_cov + post_cov.transpose().eval());
    canonicalize(post_mean, post_cov);

    FilterBelief out = belief;
    out.mean = BlobState::from_vector(post_mean);
    out.cov = post_cov;
    return out;
}

FilterBelief step(const FilterBelief& belief, const EventPacket& packet,
                  const UkfParams& params) {
    if (packet.t_start_us < belief.t_us) {
        throw std::invalid_argument("gaukf: packet precedes belief time");
    }
    const auto tic = std::chrono::steady_clock::now();

    const double dt_s = double(packet.t_end_us - belief.t_us) * 1e-6;
    FilterBelief out = predict(belief, dt_s, params);
    const std::optional<Measurement> z =
        make_measurement(packet, packet.t_end_us, params);
    if (z) {
        out = update(out, *z, params);
        out.mu2_history[0] = out.mu2_history[1];
        out.mu2_history[1] = out.mean.mu2;
        out.history_len = std::min(out.history_len + 1, 2);
    }

    const auto toc = std::chrono::steady_clock::now();
    out.last_step_us =
        std::chrono::duration<double, std::micro>(toc - tic).count();
    return out;
}

std::optional<FilterBelief> acquire(const EventPacket& packet,
                                    const UkfParams& params) {
    const std::optional<Measurement> z =
        make_measurement(packet, packet.t_end_us, params);
    if (!z) return std::nullopt;

    FilterBelief belief;
    belief.mean.x = z->x;
    belief.mean.y = z->y;
    belief.mean.vx = 0.0;
    belief.mean.vy = 0.0;
    belief.mean.mu1 = std::log(z->lambda1);
    belief.mean.mu2 = std::log(z->lambda2);
    belief.mean.theta = z->theta;
    belief.mean.omega = 0.0;
    belief.cov = Mat8::Zero();
    belief.cov.diagonal() << params.init_pos, params.init_pos, params.init_vel,
        params.init_vel, params.init_logaxis, params.init_logaxis,
        params.init_theta, params.init_omega;
    belief.t_us = packet.t_end_us;
    belief.history_len = 0;
    return belief;
}

} // namespace evlink
