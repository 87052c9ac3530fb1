#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "evlink/events.hpp"

namespace evlink {

/// LED drive schedule: ordered level changes at microsecond timestamps.
/// Levels strictly alternate; the LED is OFF before the first edge and after
/// duration_us.
struct ScheduleEdge {
    std::uint64_t t_us = 0;
    bool on = false;
};

struct OnOffSchedule {
    double carrier_hz = 1000.0; // bit rate; one bit per 1/carrier_hz
    std::vector<ScheduleEdge> edges;
    std::uint64_t duration_us = 0;

    bool level_at(std::uint64_t t_us) const;
};

/// Frame layout: alternating preamble, sync word, then 10-bit character
/// frames (start 0, eight data bits LSB-first, stop 1).
struct FrameFormat {
    int preamble_bits = 16; // alternating 1,0,1,0,...
    std::vector<int> sync = {0, 1, 1, 1, 1, 1, 1, 0};
    static constexpr char substitution = '|';
};

/// Manchester-encodes text: each bit occupies one carrier period with the
/// data transition at mid-bit (1: OFF->ON, 0: ON->OFF). Throws on empty text
/// or a carrier outside [500, 20000] Hz.
OnOffSchedule encode(const std::string& text, double carrier_hz,
                     const FrameFormat& fmt = {});

/// One sample of the reconstructed continuous-time signal.
struct SignalSample {
    std::uint64_t t_us = 0;
    double s = 0.0;
};

/// Decayed polarity accumulator: s <- s * exp(-dt/tau) + p per event,
/// sampled at event times.
std::vector<SignalSample> reconstruct_signal(std::span<const Event> events,
                                             double decay_tau_s);

struct Transition {
    std::uint64_t t_us = 0;
    bool high = false;
};

/// Dual-threshold decision rule with hysteresis over the reconstructed
/// signal. State flips HIGH only at s >= theta_hi and LOW only at
/// s <= theta_lo; the band between them absorbs noise. Incremental, so the
/// pipeline can feed it packet by packet.
class HysteresisDecoder {
public:
    HysteresisDecoder(double carrier_hz, double theta_hi = 3.0,
                      double theta_lo = -3.0, double tau_factor = 4.0);

    /// Feeds one event; returns the transition it triggered, if any.
    std::optional<Transition> feed(const Event& e);

    const std::vector<Transition>& transitions() const { return transitions_; }
    double signal_value() const { return s_; }
    double decay_tau_s() const { return tau_s_; }
    double theta_hi() const { return theta_hi_; }
    double theta_lo() const { return theta_lo_; }

    /// Replaces the thresholds (auto-calibration hook).
    void set_thresholds(double hi, double lo);

private:
    double tau_s_;
    double theta_hi_;
    double theta_lo_;
    bool high_ = false;
    double s_ = 0.0;
    std::uint64_t last_t_us_ = 0;
    bool seen_event_ = false;
    std::vector<Transition> transitions_;
};

/// Batch form of the hysteresis rule over precomputed samples.
std::vector<Transition> hysteresis_bits(std::span<const SignalSample> signal,
                                        double theta_hi, double theta_lo);

/// +-0.5 x median burst amplitude over the leading preamble stretch.
/// Returns nullopt when no usable peaks exist.
std::optional<std::pair<double, double>> calibrate_thresholds(
    std::span<const SignalSample> signal, double carrier_hz,
    const FrameFormat& fmt = {});

struct DecodeResult {
    std::string text;
    std::vector<bool> byte_ok; // per decoded byte; false = substituted
    std::string diagnostic;    // nonempty when no sync word was found
};

/// Recovers the bit clock from the preamble transition spacing (median
/// period), slots transitions onto the bit grid, locates the sync word and
/// unframes bytes. Frames with missing bits or start/stop violations become
/// the substitution marker.
DecodeResult frame_decode(std::span<const Transition> transitions,
                          const FrameFormat& fmt, double carrier_hz);

struct AccuracyReport {
    double word_accuracy = 0.0;
    double char_accuracy = 0.0;
    std::size_t reference_words = 0;
    std::size_t matched_words = 0;
};

/// Whitespace-tokenized positional comparison after aligning decoded and
/// reference on their longest common subsequence of words; character
/// accuracy uses the character-level LCS. Throws on an empty reference.
AccuracyReport word_accuracy(const std::string& decoded,
                             const std::string& reference);

} // namespace evlink
