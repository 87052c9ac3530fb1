#include "evlink/modem.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace evlink {

bool OnOffSchedule::level_at(std::uint64_t t_us) const {
    // Level after the last edge at or before t.
    bool level = false;
    for (const ScheduleEdge& e : edges) {
        if (e.t_us > t_us) break;
        level = e.on;
    }
    return level;
}

namespace {

std::vector<int> frame_bits(const std::string& text, const FrameFormat& fmt) {
    std::vector<int> bits;
    bits.reserve(std::size_t(fmt.preamble_bits) + fmt.sync.size() +
                 text.size() * 10);
    for (int i = 0; i < fmt.preamble_bits; ++i) bits.push_back(i % 2 == 0 ? 1 : 0);
    bits.insert(bits.end(), fmt.sync.begin(), fmt.sync.end());
    for (unsigned char ch : text) {
        bits.push_back(0); // start
        for (int b = 0; b < 8; ++b) bits.push_back((ch >> b) & 1);
        bits.push_back(1); // stop
    }
    return bits;
}

} // namespace

OnOffSchedule encode(const std::string& text, double carrier_hz,
                     const FrameFormat& fmt) {
    if (text.empty()) {
        throw std::invalid_argument("encode: empty text");
    }
    if (!(carrier_hz >= 500.0 && carrier_hz <= 20000.0)) {
        throw std::invalid_argument("encode: carrier_hz outside [500, 20000]");
    }

    const std::vector<int> bits = frame_bits(text, fmt);
    const double t_bit_us = 1e6 / carrier_hz;

    OnOffSchedule sched;
    sched.carrier_hz = carrier_hz;
    bool level = false; // LED dark before transmission
    for (std::size_t k = 0; k < bits.size(); ++k) {
        // Manchester halves: bit 1 = OFF then ON, bit 0 = ON then OFF.
        const bool first_half = bits[k] == 0;
        const bool second_half = !first_half;
        const auto t_start = std::uint64_t(std::llround(double(k) * t_bit_us));
        const auto t_mid = std::uint64_t(std::llround((double(k) + 0.5) * t_bit_us));
        if (first_half != level) {
            sched.edges.push_back({t_start, first_half});
            level = first_half;
        }
        sched.edges.push_back({t_mid, second_half});
        level = second_half;
    }
    const auto t_end = std::uint64_t(std::llround(double(bits.size()) * t_bit_us));
    if (level) {
        sched.edges.push_back({t_end, false});
    }
    // One trailing bit period of silence so the final edge stays observable.
    sched.duration_us = t_end + std::uint64_t(std::llround(t_bit_us));
    return sched;
}

std::vector<SignalSample> reconstruct_signal(std::span<const Event> events,
                                             double decay_tau_s) {
    std::vector<SignalSample> out;
    out.reserve(events.size());
    double s = 0.0;
    std::uint64_t last_t = 0;
    bool first = true;
    for (const Event& e : events) {
        if (!first) {
            const double dt_s = double(e.t_us - last_t) * 1e-6;
            s *= std::exp(-dt_s / decay_tau_s);
        }
        s += double(e.p);
        last_t = e.t_us;
        first = false;
        out.push_back({e.t_us, s});
    }
    return out;
}

HysteresisDecoder::HysteresisDecoder(double carrier_hz, double theta_hi,
                                     double theta_lo, double tau_factor)
    : tau_s_(1.0 / (tau_factor * carrier_hz)),
      theta_hi_(theta_hi),
      theta_lo_(theta_lo) {
    if (!(theta_hi > theta_lo)) {
        throw std::invalid_argument("HysteresisDecoder: theta_hi <= theta_lo");
    }
}

void HysteresisDecoder::set_thresholds(double hi, double lo) {
    if (!(hi > lo)) {
        throw std::invalid_argument("HysteresisDecoder: theta_hi <= theta_lo");
    }
    theta_hi_ = hi;
    theta_lo_ = lo;
}

std::optional<Transition> HysteresisDecoder::feed(const Event& e) {
    if (seen_event_) {
        const double dt_s = double(e.t_us - last_t_us_) * 1e-6;
        s_ *= std::exp(-dt_s / tau_s_);
    }
    s_ += double(e.p);
    last_t_us_ = e.t_us;
    seen_event_ = true;

    if (!high_ && s_ >= theta_hi_) {
        high_ = true;
        transitions_.push_back({e.t_us, true});
        return transitions_.back();
    }
    if (high_ && s_ <= theta_lo_) {
        high_ = false;
        transitions_.push_back({e.t_us, false});
        return transitions_.back();
    }
    return std::nullopt;
}

std::vector<Transition> hysteresis_bits(std::span<const SignalSample> signal,
                                        double theta_hi, double theta_lo) {
    if (!(theta_hi > theta_lo)) {
        throw std::invalid_argument("hysteresis_bits: theta_hi <= theta_lo");
    }
    std::vector<Transition> out;
    bool high = false;
    for (const SignalSample& smp : signal) {
        if (!high && smp.s >= theta_hi) {
            high = true;
            out.push_back({smp.t_us, true});
        } else if (high && smp.s <= theta_lo) {
            high = false;
            out.push_back({smp.t_us, false});
        }
    }
    return out;
}

std::optional<std::pair<double, double>> calibrate_thresholds(
    std::span<const SignalSample> signal, double carrier_hz,
    const FrameFormat& fmt) {
    if (signal.empty()) return std::nullopt;
    const double t_bit_us = 1e6 / carrier_hz;
    const std::uint64_t t_limit =
        signal.front().t_us +
        std::uint64_t(std::llround(double(fmt.preamble_bits) * t_bit_us));

    std::vector<double> peaks;
    for (std::size_t i = 1; i + 1 < signal.size(); ++i) {
        if (signal[i].t_us > t_limit) break;
        const double v = std::abs(signal[i].s);
        if (v >= std::abs(signal[i - 1].s) && v >= std::abs(signal[i + 1].s) &&
            v > 1.0) {
            peaks.push_back(v);
        }
    }
    if (peaks.empty()) return std::nullopt;
    std::nth_element(peaks.begin(), peaks.begin() + peaks.size() / 2, peaks.end());
    const double amplitude = peaks[peaks.size() / 2];
    return std::make_pair(0.5 * amplitude, -0.5 * amplitude);
}

DecodeResult frame_decode(std::span<const Transition> transitions,
                          const FrameFormat& fmt, double carrier_hz) {
    DecodeResult result;
    if (transitions.size() < fmt.sync.size()) {
        result.diagnostic = "too few transitions for a sync word";
        return result;
    }

    // Clock recovery: median gap near the nominal period, taken over the
    // leading transitions (the alternating preamble spaces mids one period
    // apart).
    const double t_nom = 1e6 / carrier_hz;
    std::vector<double> gaps;
    const std::size_t probe = std::min<std::size_t>(transitions.size(), 32);
    for (std::size_t i = 1; i < probe; ++i) {
        const double g = double(transitions[i].t_us - transitions[i - 1].t_us);
        if (g >= 0.75 * t_nom && g <= 1.25 * t_nom) gaps.push_back(g);
    }
    double t_bit = t_nom;
    if (!gaps.empty()) {
        std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
        t_bit = gaps[gaps.size() / 2];
    }

    // Slot transitions onto the bit grid. The grid re-anchors at every
    // accepted mid-bit transition so period error never accumulates across a
    // long payload; off-grid transitions are Manchester setup edges. Slots
    // that never receive a mid transition stay unknown.
    constexpr int kUnknown = -1, kConflict = -2;
    std::vector<int> bits;
    bits.reserve(transitions.size() * 2);
    bits.push_back(transitions.front().high ? 1 : 0);
    double t_anchor = double(transitions.front().t_us);
    std::size_t slot_anchor = 0;
    for (std::size_t i = 1; i < transitions.size(); ++i) {
        const Transition& tr = transitions[i];
        const double delta = double(tr.t_us) - t_anchor;
        const double k = std::round(delta / t_bit);
        if (k > 1e6) break; // absurd gap: stop rather than allocate slots
        if (std::abs(delta - k * t_bit) > 0.25 * t_bit) continue; // boundary
        const std::size_t idx = slot_anchor + std::size_t(k);
        const int value = tr.high ? 1 : 0;
        if (idx >= bits.size()) {
            bits.resize(idx + 1, kUnknown);
        }
        if (bits[idx] == kUnknown) {
            bits[idx] = value;
        } else if (bits[idx] != value) {
            bits[idx] = kConflict;
        }
        t_anchor = double(tr.t_us);
        slot_anchor = idx;
    }

    // Frames follow each located sync word. A fully silent frame (no mid
    // transition in any of its slots) ends the burst, and a fresh sync-word
    // search picks up any later transmission on its own bit grid.
    const auto find_sync = [&](std::size_t from) -> std::size_t {
        for (std::size_t i = from; i + fmt.sync.size() <= bits.size(); ++i) {
            bool match = true;
            for (std::size_t k = 0; k < fmt.sync.size(); ++k) {
                if (bits[i + k] != fmt.sync[k]) {
                    match = false;
                    break;
                }
            }
            if (match) return i + fmt.sync.size();
        }
        return SIZE_MAX;
    };

    std::size_t cursor = find_sync(0);
    if (cursor == SIZE_MAX) {
        result.diagnostic = "sync word not found";
        return result;
    }
    while (cursor != SIZE_MAX) {
        std::size_t f = cursor;
        for (; f + 10 <= bits.size(); f += 10) {
            bool ok = bits[f] == 0 && bits[f + 9] == 1;
            bool any_known = false;
            unsigned char byte = 0;
            for (int b = 0; b < 10; ++b) {
                if (bits[f + b] != kUnknown) any_known = true;
            }
            if (!any_known) break; // silence: burst over
            for (int b = 0; b < 8; ++b) {
                const int v = bits[f + 1 + b];
                if (v == 1) {
                    byte |= (1u << b);
                } else if (v != 0) {
                    ok = false;
                }
            }
            result.text.push_back(ok ? char(byte) : FrameFormat::substitution);
            result.byte_ok.push_back(ok);
        }
        cursor = (f + 10 <= bits.size()) ? find_sync(f) : SIZE_MAX;
    }
    return result;
}

namespace {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> words;
    std::istringstream ss(text);
    std::string w;
    while (ss >> w) words.push_back(w);
    return words;
}

template <typename Seq>
std::size_t lcs_length(const Seq& a, const Seq& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1
                                            : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

} // namespace

AccuracyReport word_accuracy(const std::string& decoded,
                             const std::string& reference) {
    if (reference.empty()) {
        throw std::invalid_argument("word_accuracy: empty reference");
    }
    const std::vector<std::string> ref_words = tokenize(reference);
    const std::vector<std::string> dec_words = tokenize(decoded);
    if (ref_words.empty()) {
        throw std::invalid_argument("word_accuracy: reference has no words");
    }

    AccuracyReport report;
    report.reference_words = ref_words.size();
    report.matched_words = lcs_length(dec_words, ref_words);
    report.word_accuracy =
        double(report.matched_words) / double(ref_words.size());
    report.char_accuracy =
        double(lcs_length(decoded, reference)) / double(reference.size());
    return report;
}

} // namespace evlink
