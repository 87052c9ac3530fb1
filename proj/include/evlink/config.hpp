#pragma once

#include <cstdint>
#include <string>

#include "evlink/ekf_baseline.hpp"
#include "evlink/gaukf.hpp"
#include "evlink/simulate.hpp"

namespace evlink {

enum class TrackerKind { gaukf, ekf };

/// Every tunable named by a module, with its default. Loadable from a flat
/// `section.key = value` text file; unknown keys are rejected.
struct AppConfig {
    std::uint16_t sensor_width = 1280;
    std::uint16_t sensor_height = 720;

    std::uint16_t filter_cell_size = 16;
    std::uint32_t filter_activity_threshold = 3;

    std::size_t ring_capacity = 64;

    double ukf_alpha = 0.5;
    double ukf_beta = 2.0;
    double ukf_kappa = 0.0;
    double ukf_beta_decay = 1500.0;
    std::uint32_t ukf_n_min = 4;
    double ukf_dlam_clamp = 0.2;
    double ukf_cov_floor_sigma = 0.5;
    double ukf_init_pos = 25.0;
    double ukf_init_vel = 1e6;
    double ukf_init_logaxis = 0.25;
    double ukf_init_theta = 1.0;
    double ukf_init_omega = 10.0;
    double ukf_q_pos = 1.0;
    double ukf_q_vel = 1e8;
    double ukf_q_logaxis = 0.01;
    double ukf_q_theta = 0.05;
    double ukf_q_omega = 1.0;
    double ukf_r_pos = 1.0;
    double ukf_r_logaxis = 0.02;
    double ukf_r_theta = 0.05;

    double ekf_forgetting = 0.99;
    double ekf_q_pos = 1.0;
    double ekf_q_vel = 1e8;
    double ekf_q_theta = 0.05;
    double ekf_q_rate = 1.0;
    double ekf_q_axis = 50.0;
    double ekf_q_axis_corr = 0.9;
    double ekf_r_axis = 1.0;
    double ekf_r_axis_corr = -0.5;
    double ekf_r_theta = 0.05;

    std::uint64_t pipeline_window_us = 4000;
    TrackerKind pipeline_tracker = TrackerKind::gaukf;
    double pipeline_k_roi = 3.0;
    std::uint64_t pipeline_budget_us = 4000;
    std::uint32_t pipeline_loss_windows = 50;

    double modem_carrier_hz = 1000.0;
    double modem_theta_hi = 3.0;
    double modem_theta_lo = -3.0;
    bool modem_auto_threshold = false;
    double modem_tau_factor = 4.0;
    int modem_preamble_bits = 16;

    double sim_led_lambda1 = 6.0;
    double sim_led_lambda2 = 6.0;
    bool sim_orient_follows_velocity = true;
    double sim_events_per_edge = 30.0;
    double sim_motion_event_rate = 2.0;
    double sim_noise_rate = 30000.0;
    double sim_distance_scale = 1.0;
    double sim_elongation_s = 1e-3;

    /// Parses `section.key = value` lines ('#' comments, blank lines ok).
    /// Throws std::runtime_error on unknown keys or unparsable values.
    static AppConfig load(const std::string& path);

    /// Applies one key=value pair; throws on unknown key / bad value.
    void set(const std::string& key, const std::string& value);

    SensorDims sensor() const { return {sensor_width, sensor_height}; }
    UkfParams ukf_params() const;
    EkfParams ekf_params() const;
    LedModel led_model() const;
};

} // namespace evlink
