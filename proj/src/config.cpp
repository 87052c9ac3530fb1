#include "evlink/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace evlink {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    std::istringstream ss(value);
    T v{};
    if (!(ss >> v) || !(ss >> std::ws).eof()) {
        throw std::runtime_error("config: bad value for " + key + ": '" + value +
                                 "'");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "on") return true;
    if (value == "0" || value == "false" || value == "off") return false;
    throw std::runtime_error("config: bad boolean for " + key + ": '" + value +
                             "'");
}

} // namespace

void AppConfig::set(const std::string& key, const std::string& value) {
    using Setter = std::function<void(AppConfig&, const std::string&)>;
    static const std::map<std::string, Setter> setters = {
        {"sensor.width", [](AppConfig& c, const std::string& v) {
             c.sensor_width = parse_number<std::uint16_t>("sensor.width", v); }},
        {"sensor.height", [](AppConfig& c, const std::string& v) {
             c.sensor_height = parse_number<std::uint16_t>("sensor.height", v); }},
        {"filter.cell_size", [](AppConfig& c, const std::string& v) {
             c.filter_cell_size = parse_number<std::uint16_t>("filter.cell_size", v); }},
        {"filter.activity_threshold", [](AppConfig& c, const std::string& v) {
             c.filter_activity_threshold =
                 parse_number<std::uint32_t>("filter.activity_threshold", v); }},
        {"ring.capacity", [](AppConfig& c, const std::string& v) {
             c.ring_capacity = parse_number<std::size_t>("ring.capacity", v); }},
        {"ukf.alpha", [](AppConfig& c, const std::string& v) {
             c.ukf_alpha = parse_number<double>("ukf.alpha", v); }},
        {"ukf.beta", [](AppConfig& c, const std::string& v) {
             c.ukf_beta = parse_number<double>("ukf.beta", v); }},
        {"ukf.kappa", [](AppConfig& c, const std::string& v) {
             c.ukf_kappa = parse_number<double>("ukf.kappa", v); }},
        {"ukf.beta_decay", [](AppConfig& c, const std::string& v) {
             c.ukf_beta_decay = parse_number<double>("ukf.beta_decay", v); }},
        {"ukf.n_min", [](AppConfig& c, const std::string& v) {
             c.ukf_n_min = parse_number<std::uint32_t>("ukf.n_min", v); }},
        {"ukf.dlam_clamp", [](AppConfig& c, const std::string& v) {
             c.ukf_dlam_clamp = parse_number<double>("ukf.dlam_clamp", v); }},
        {"ukf.cov_floor_sigma", [](AppConfig& c, const std::string& v) {
             c.ukf_cov_floor_sigma = parse_number<double>("ukf.cov_floor_sigma", v); }},
        {"ukf.init_pos", [](AppConfig& c, const std::string& v) {
             c.ukf_init_pos = parse_number<double>("ukf.init_pos", v); }},
        {"ukf.init_vel", [](AppConfig& c, const std::string& v) {
             c.ukf_init_vel = parse_number<double>("ukf.init_vel", v); }},
        {"ukf.init_logaxis", [](AppConfig& c, const std::string& v) {
             c.ukf_init_logaxis = parse_number<double>("ukf.init_logaxis", v); }},
        {"ukf.init_theta", [](AppConfig& c, const std::string& v) {
             c.ukf_init_theta = parse_number<double>("ukf.init_theta", v); }},
        {"ukf.init_omega", [](AppConfig& c, const std::string& v) {
             c.ukf_init_omega = parse_number<double>("ukf.init_omega", v); }},
        {"ukf.q_pos", [](AppConfig& c, const std::string& v) {
             c.ukf_q_pos = parse_number<double>("ukf.q_pos", v); }},
        {"ukf.q_vel", [](AppConfig& c, const std::string& v) {
             c.ukf_q_vel = parse_number<double>("ukf.q_vel", v); }},
        {"ukf.q_logaxis", [](AppConfig& c, const std::string& v) {
             c.ukf_q_logaxis = parse_number<double>("ukf.q_logaxis", v); }},
        {"ukf.q_theta", [](AppConfig& c, const std::string& v) {
             c.ukf_q_theta = parse_number<double>("ukf.q_theta", v); }},
        {"ukf.q_omega", [](AppConfig& c, const std::string& v) {
             c.ukf_q_omega = parse_number<double>("ukf.q_omega", v); }},
        {"ukf.r_pos", [](AppConfig& c, const std::string& v) {
             c.ukf_r_pos = parse_number<double>("ukf.r_pos", v); }},
        {"ukf.r_logaxis", [](AppConfig& c, const std::string& v) {
             c.ukf_r_logaxis = parse_number<double>("ukf.r_logaxis", v); }},
        {"ukf.r_theta", [](AppConfig& c, const std::string& v) {
             c.ukf_r_theta = parse_number<double>("ukf.r_theta", v); }},
        {"ekf.forgetting", [](AppConfig& c, const std::string& v) {
             c.ekf_forgetting = parse_number<double>("ekf.forgetting", v); }},
        {"ekf.q_pos", [](AppConfig& c, const std::string& v) {
             c.ekf_q_pos = parse_number<double>("ekf.q_pos", v); }},
        {"ekf.q_vel", [](AppConfig& c, const std::string& v) {
             c.ekf_q_vel = parse_number<double>("ekf.q_vel", v); }},
        {"ekf.q_theta", [](AppConfig& c, const std::string& v) {
             c.ekf_q_theta = parse_number<double>("ekf.q_theta", v); }},
        {"ekf.q_rate", [](AppConfig& c, const std::string& v) {
             c.ekf_q_rate = parse_number<double>("ekf.q_rate", v); }},
        {"ekf.q_axis", [](AppConfig& c, const std::string& v) {
             c.ekf_q_axis = parse_number<double>("ekf.q_axis", v); }},
        {"ekf.q_axis_corr", [](AppConfig& c, const std::string& v) {
             c.ekf_q_axis_corr = parse_number<double>("ekf.q_axis_corr", v); }},
        {"ekf.r_axis", [](AppConfig& c, const std::string& v) {
             c.ekf_r_axis = parse_number<double>("ekf.r_axis", v); }},
        {"ekf.r_axis_corr", [](AppConfig& c, const std::string& v) {
             c.ekf_r_axis_corr = parse_number<double>("ekf.r_axis_corr", v); }},
        {"ekf.r_theta", [](AppConfig& c, const std::string& v) {
             c.ekf_r_theta = parse_number<double>("ekf.r_theta", v); }},
        {"pipeline.window_us", [](AppConfig& c, const std::string& v) {
             c.pipeline_window_us = parse_number<std::uint64_t>("pipeline.window_us", v); }},
        {"pipeline.tracker", [](AppConfig& c, const std::string& v) {
             if (v == "gaukf") c.pipeline_tracker = TrackerKind::gaukf;
             else if (v == "ekf") c.pipeline_tracker = TrackerKind::ekf;
             else throw std::runtime_error("config: pipeline.tracker must be gaukf or ekf"); }},
        {"pipeline.k_roi", [](AppConfig& c, const std::string& v) {
             c.pipeline_k_roi = parse_number<double>("pipeline.k_roi", v); }},
        {"pipeline.budget_us", [](AppConfig& c, const std::string& v) {
             c.pipeline_budget_us = parse_number<std::uint64_t>("pipeline.budget_us", v); }},
        {"pipeline.loss_windows", [](AppConfig& c, const std::string& v) {
             c.pipeline_loss_windows = parse_number<std::uint32_t>("pipeline.loss_windows", v); }},
        {"modem.carrier_hz", [](AppConfig& c, const std::string& v) {
             c.modem_carrier_hz = parse_number<double>("modem.carrier_hz", v); }},
        {"modem.theta_hi", [](AppConfig& c, const std::string& v) {
             c.modem_theta_hi = parse_number<double>("modem.theta_hi", v); }},
        {"modem.theta_lo", [](AppConfig& c, const std::string& v) {
             c.modem_theta_lo = parse_number<double>("modem.theta_lo", v); }},
        {"modem.auto_threshold", [](AppConfig& c, const std::string& v) {
             c.modem_auto_threshold = parse_bool("modem.auto_threshold", v); }},
        {"modem.tau_factor", [](AppConfig& c, const std::string& v) {
             c.modem_tau_factor = parse_number<double>("modem.tau_factor", v); }},
        {"modem.preamble_bits", [](AppConfig& c, const std::string& v) {
             c.modem_preamble_bits = parse_number<int>("modem.preamble_bits", v); }},
        {"sim.led_lambda1", [](AppConfig& c, const std::string& v) {
             c.sim_led_lambda1 = parse_number<double>("sim.led_lambda1", v); }},
        {"sim.led_lambda2", [](AppConfig& c, const std::string& v) {
             c.sim_led_lambda2 = parse_number<double>("sim.led_lambda2", v); }},
        {"sim.orient_follows_velocity", [](AppConfig& c, const std::string& v) {
             c.sim_orient_follows_velocity = parse_bool("sim.orient_follows_velocity", v); }},
        {"sim.events_per_edge", [](AppConfig& c, const std::string& v) {
             c.sim_events_per_edge = parse_number<double>("sim.events_per_edge", v); }},
        {"sim.motion_event_rate", [](AppConfig& c, const std::string& v) {
             c.sim_motion_event_rate = parse_number<double>("sim.motion_event_rate", v); }},
        {"sim.noise_rate", [](AppConfig& c, const std::string& v) {
             c.sim_noise_rate = parse_number<double>("sim.noise_rate", v); }},
        {"sim.distance_scale", [](AppConfig& c, const std::string& v) {
             c.sim_distance_scale = parse_number<double>("sim.distance_scale", v); }},
        {"sim.elongation_s", [](AppConfig& c, const std::string& v) {
             c.sim_elongation_s = parse_number<double>("sim.elongation_s", v); }},
    };

    const auto it = setters.find(key);
    if (it == setters.end()) {
        throw std::runtime_error("config: unknown key '" + key + "'");
    }
    it->second(*this, value);
}

AppConfig AppConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    AppConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected key = value");
        }
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

UkfParams AppConfig::ukf_params() const {
    UkfParams p;
    p.alpha = ukf_alpha;
    p.beta_ukf = ukf_beta;
    p.kappa = ukf_kappa;
    p.beta_decay = ukf_beta_decay;
    p.n_min = ukf_n_min;
    p.dlam_clamp = ukf_dlam_clamp;
    p.cov_floor_sigma = ukf_cov_floor_sigma;
    p.init_pos = ukf_init_pos;
    p.init_vel = ukf_init_vel;
    p.init_logaxis = ukf_init_logaxis;
    p.init_theta = ukf_init_theta;
    p.init_omega = ukf_init_omega;
    p.Q.setZero();
    p.Q.diagonal() << ukf_q_pos, ukf_q_pos, ukf_q_vel, ukf_q_vel, ukf_q_logaxis,
        ukf_q_logaxis, ukf_q_theta, ukf_q_omega;
    p.R.setZero();
    p.R.diagonal() << ukf_r_pos, ukf_r_pos, ukf_r_logaxis, ukf_r_logaxis,
        ukf_r_theta;
    return p;
}

EkfParams AppConfig::ekf_params() const {
    EkfParams p;
    p.forgetting = ekf_forgetting;
    p.q_pos = ekf_q_pos;
    p.q_vel = ekf_q_vel;
    p.q_theta = ekf_q_theta;
    p.q_rate = ekf_q_rate;
    p.q_axis = ekf_q_axis;
    p.q_axis_corr = ekf_q_axis_corr;
    p.r_axis = ekf_r_axis;
    p.r_axis_corr = ekf_r_axis_corr;
    p.r_theta = ekf_r_theta;
    return p;
}

LedModel AppConfig::led_model() const {
    LedModel m;
    m.lambda1 = sim_led_lambda1;
    m.lambda2 = sim_led_lambda2;
    m.orientation_follows_velocity = sim_orient_follows_velocity;
    m.events_per_edge = sim_events_per_edge;
    m.motion_event_rate = sim_motion_event_rate;
    m.noise_rate = sim_noise_rate;
    m.distance_scale = sim_distance_scale;
    m.elongation_s = sim_elongation_s;
    return m;
}

} // namespace evlink
