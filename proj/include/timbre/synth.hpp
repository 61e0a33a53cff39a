#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "timbre/audio.hpp"
#include "timbre/rng.hpp"

namespace timbre {

enum class Family : int {
    bass = 0,
    percussion,
    strings,
    brass,
    synth_lead,
    synth_pad,
    keyboard,
    guitar,
    flute,
    reed,
    mallet,
    organ,
};

inline constexpr std::array<Family, 12> kAllFamilies = {
    Family::bass,     Family::percussion, Family::strings, Family::brass,
    Family::synth_lead, Family::synth_pad, Family::keyboard, Family::guitar,
    Family::flute,    Family::reed,       Family::mallet,  Family::organ,
};

inline const char* family_name(Family f) {
    switch (f) {
        case Family::bass: return "bass";
        case Family::percussion: return "percussion";
        case Family::strings: return "strings";
        case Family::brass: return "brass";
        case Family::synth_lead: return "synth_lead";
        case Family::synth_pad: return "synth_pad";
        case Family::keyboard: return "keyboard";
        case Family::guitar: return "guitar";
        case Family::flute: return "flute";
        case Family::reed: return "reed";
        case Family::mallet: return "mallet";
        case Family::organ: return "organ";
    }
    throw std::invalid_argument("unknown family");
}

inline Family family_from_name(const std::string& name) {
    for (Family f : kAllFamilies)
        if (name == family_name(f)) return f;
    throw std::invalid_argument("unknown family name: " + name);
}

enum class Waveform : int { sine = 0, saw, square, triangle, noise };

inline const char* waveform_name(Waveform w) {
    switch (w) {
        case Waveform::sine: return "sine";
        case Waveform::saw: return "saw";
        case Waveform::square: return "square";
        case Waveform::triangle: return "triangle";
        case Waveform::noise: return "noise";
    }
    throw std::invalid_argument("unknown waveform");
}

inline Waveform waveform_from_name(const std::string& name) {
    for (Waveform w : {Waveform::sine, Waveform::saw, Waveform::square, Waveform::triangle, Waveform::noise})
        if (name == waveform_name(w)) return w;
    throw std::invalid_argument("unknown waveform name: " + name);
}

struct Oscillator {
    Waveform wave = Waveform::sine;
    double amplitude = 1.0;     // [0,1], relative
    double detune_cents = 0.0;
};

struct Adsr {
    double attack = 0.01;
    double decay = 0.1;
    double sustain = 0.8;  // level, [0,1]
    double release = 0.1;
};

enum class FilterType : int { none = 0, lowpass, highpass };

struct FilterSpec {
    FilterType type = FilterType::none;
    double cutoff_hz = 1000.0;
    double resonance = 0.707;  // biquad Q
};

struct ReverbFx {
    double decay = 1.0;  // T60-style decay, seconds
    double wet = 0.3;
};
struct DelayFx {
    double time = 0.25;
    double feedback = 0.4;  // < 1
    double wet = 0.3;
};
struct DistortionFx {
    double drive = 2.0;
};
struct ChorusFx {
    double rate_hz = 0.8;
    double depth = 0.5;  // [0,1]
};

using Effect = std::variant<ReverbFx, DelayFx, DistortionFx, ChorusFx>;
using EffectChain = std::vector<Effect>;

// One augmentation step shifts the id by this much; bank ids stay well below it.
inline constexpr int kAugmentIdOffset = 1 << 20;

struct InstrumentPatch {
    int id = 0;
    Family family = Family::bass;
    std::vector<Oscillator> oscillators;
    Adsr envelope;
    FilterSpec filter;
    EffectChain effects;
    double master_gain = 0.8;
    std::uint64_t seed = 0;
    std::optional<int> augmented_from;  // set for effect-stripped variants
};

struct NoteEvent {
    int pitch = 60;      // MIDI [0,127]
    int velocity = 100;  // MIDI [1,127]
    double onset = 0.0;
    double duration = 1.0;
};

inline double midi_to_hz(double pitch) { return 440.0 * std::pow(2.0, (pitch - 69.0) / 12.0); }

inline double velocity_to_amplitude(int velocity) {
    return std::pow(static_cast<double>(velocity) / 127.0, 1.5);
}

namespace detail {

inline double adsr_value(const Adsr& env, double t, double note_duration) {
    if (t < 0.0) return 0.0;
    auto held = [&](double u) {
        if (u < env.attack) return env.attack > 0.0 ? u / env.attack : 1.0;
        const double td = u - env.attack;
        if (td < env.decay) return 1.0 + (env.sustain - 1.0) * (td / env.decay);
        return env.sustain;
    };
    if (t < note_duration) return held(t);
    const double level = held(note_duration);
    const double tr = t - note_duration;
    if (env.release <= 0.0) return 0.0;
    if (tr >= env.release) return 0.0;
    return level * (1.0 - tr / env.release);
}

inline double osc_sample(Waveform w, double phase01) {
    const double p = phase01 - std::floor(phase01);
    switch (w) {
        case Waveform::sine: return std::sin(2.0 * M_PI * p);
        case Waveform::saw: return 2.0 * p - 1.0;
        case Waveform::square: return p < 0.5 ? 1.0 : -1.0;
        case Waveform::triangle: return 1.0 - 4.0 * std::abs(p - 0.5);
        case Waveform::noise: return 0.0;  // handled separately
    }
    return 0.0;
}

// RBJ biquad, applied in place.
inline void apply_biquad(std::vector<double>& x, FilterType type, double cutoff, double q, double sr) {
    if (type == FilterType::none) return;
    const double w0 = 2.0 * M_PI * cutoff / sr;
    const double cw = std::cos(w0), sw = std::sin(w0);
    const double alpha = sw / (2.0 * q);
    double b0, b1, b2;
    if (type == FilterType::lowpass) {
        b0 = (1.0 - cw) / 2.0;
        b1 = 1.0 - cw;
        b2 = (1.0 - cw) / 2.0;
    } else {
        b0 = (1.0 + cw) / 2.0;
        b1 = -(1.0 + cw);
        b2 = (1.0 + cw) / 2.0;
    }
    const double a0 = 1.0 + alpha, a1 = -2.0 * cw, a2 = 1.0 - alpha;
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (double& v : x) {
        const double y = (b0 * v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2) / a0;
        x2 = x1;
        x1 = v;
        y2 = y1;
        y1 = y;
        v = y;
    }
}

inline void apply_reverb(std::vector<double>& x, const ReverbFx& fx, double sr) {
    static constexpr std::array<double, 4> comb_ms = {29.7, 37.1, 41.1, 43.7};
    static constexpr std::array<double, 2> allpass_ms = {5.0, 1.7};
    std::vector<double> wet(x.size(), 0.0);
    for (double ms : comb_ms) {
        const auto d = static_cast<std::size_t>(std::max(1.0, ms * 1e-3 * sr));
        const double g = fx.decay > 0.0 ? std::pow(10.0, -3.0 * (ms * 1e-3) / fx.decay) : 0.0;
        std::vector<double> line(d, 0.0);
        std::size_t pos = 0;
        for (std::size_t n = 0; n < x.size(); ++n) {
            const double out = line[pos];
            line[pos] = x[n] + g * out;
            pos = (pos + 1) % d;
            wet[n] += out * 0.25;
        }
    }
    for (double ms : allpass_ms) {
        const auto d = static_cast<std::size_t>(std::max(1.0, ms * 1e-3 * sr));
        const double g = 0.7;
        std::vector<double> line(d, 0.0);
        std::size_t pos = 0;
        for (double& v : wet) {
            const double buf = line[pos];
            const double in = v + g * buf;
            line[pos] = in;
            pos = (pos + 1) % d;
            v = buf - g * in;
        }
    }
    for (std::size_t n = 0; n < x.size(); ++n) x[n] = (1.0 - fx.wet) * x[n] + fx.wet * wet[n];
}

inline void apply_delay(std::vector<double>& x, const DelayFx& fx, double sr) {
    const auto d = static_cast<std::size_t>(std::max(1.0, fx.time * sr));
    std::vector<double> line(d, 0.0);
    std::size_t pos = 0;
    for (double& v : x) {
        const double out = line[pos];
        line[pos] = v + fx.feedback * out;
        pos = (pos + 1) % d;
        v = v + fx.wet * out;
    }
}

inline void apply_distortion(std::vector<double>& x, const DistortionFx& fx) {
    const double norm = std::tanh(std::max(fx.drive, 1e-6));
    for (double& v : x) v = std::tanh(fx.drive * v) / norm;
}

inline void apply_chorus(std::vector<double>& x, const ChorusFx& fx, double sr) {
    const double base = 0.015 * sr;            // 15 ms
    const double mod = fx.depth * 0.010 * sr;  // up to +-10 ms
    const std::size_t max_delay = static_cast<std::size_t>(base + mod) + 2;
    std::vector<double> line(max_delay + 1, 0.0);
    std::size_t pos = 0;
    const std::size_t len = line.size();
    for (std::size_t n = 0; n < x.size(); ++n) {
        line[pos] = x[n];
        const double t = static_cast<double>(n) / sr;
        const double delay = base + mod * std::sin(2.0 * M_PI * fx.rate_hz * t);
        const double read = static_cast<double>(pos) - delay;
        double ri = std::floor(read);
        const double frac = read - ri;
        auto wrap = [&](double idx) {
            auto i = static_cast<long>(idx) % static_cast<long>(len);
            if (i < 0) i += static_cast<long>(len);
            return static_cast<std::size_t>(i);
        };
        const double delayed = (1.0 - frac) * line[wrap(ri)] + frac * line[wrap(ri + 1.0)];
        x[n] = 0.5 * (x[n] + delayed);
        pos = (pos + 1) % len;
    }
}

inline void apply_effects(std::vector<double>& x, const EffectChain& chain, double sr) {
    for (const Effect& e : chain) {
        std::visit(
            [&](const auto& fx) {
                using T = std::decay_t<decltype(fx)>;
                if constexpr (std::is_same_v<T, ReverbFx>)
                    apply_reverb(x, fx, sr);
                else if constexpr (std::is_same_v<T, DelayFx>)
                    apply_delay(x, fx, sr);
                else if constexpr (std::is_same_v<T, DistortionFx>)
                    apply_distortion(x, fx);
                else
                    apply_chorus(x, fx, sr);
            },
            e);
    }
}

}  // namespace detail

inline void validate_patch(const InstrumentPatch& patch, double sample_rate) {
    if (patch.oscillators.empty()) throw std::invalid_argument("patch has no oscillators");
    const Adsr& e = patch.envelope;
    if (e.attack < 0 || e.decay < 0 || e.release < 0)
        throw std::invalid_argument("negative envelope time constant");
    if (patch.filter.type != FilterType::none &&
        (patch.filter.cutoff_hz <= 20.0 || patch.filter.cutoff_hz >= sample_rate / 2.0))
        throw std::invalid_argument("filter cutoff outside (20 Hz, Nyquist)");
    for (const Effect& fx : patch.effects) {
        if (const auto* d = std::get_if<DelayFx>(&fx); d && d->feedback >= 1.0)
            throw std::invalid_argument("delay feedback must be < 1");
    }
}

// Renders one note into a buffer of exactly ceil(length * sample_rate) samples.
// Deterministic: same (patch, note, sample_rate, length) gives bit-identical output.
inline AudioBuffer render_note(const InstrumentPatch& patch, const NoteEvent& note,
                               double sample_rate, double length) {
    if (note.pitch < 0 || note.pitch > 127) throw std::invalid_argument("pitch outside [0,127]");
    if (note.velocity < 1 || note.velocity > 127)
        throw std::invalid_argument("velocity outside [1,127]");
    if (note.onset < 0 || note.duration <= 0) throw std::invalid_argument("bad note timing");
    // sub-sample tolerance: release is often computed as length - onset - duration,
    // and the re-summed value can round one ulp past length
    if (note.onset + note.duration + patch.envelope.release > length + 1e-9)
        throw std::invalid_argument("render length too short for note + release");
    validate_patch(patch, sample_rate);

    const auto n = static_cast<std::size_t>(std::ceil(length * sample_rate));
    std::vector<double> x(n, 0.0);

    double amp_sum = 0.0;
    for (const Oscillator& o : patch.oscillators) amp_sum += o.amplitude;
    if (amp_sum > 0.0) {
        const double f0 = midi_to_hz(note.pitch);
        const auto start = static_cast<std::size_t>(std::llround(note.onset * sample_rate));
        const double active = note.duration + patch.envelope.release;
        const auto stop = std::min(
            n, start + static_cast<std::size_t>(std::ceil(active * sample_rate)) + 1);

        for (const Oscillator& o : patch.oscillators) {
            if (o.amplitude <= 0.0) continue;
            const double w = o.amplitude / amp_sum;
            if (o.wave == Waveform::noise) {
                Rng rng(patch.seed, 0x6e6f6973ULL, static_cast<std::uint64_t>(note.pitch),
                        static_cast<std::uint64_t>(note.velocity));
                for (std::size_t i = start; i < stop; ++i)
                    x[i] += w * rng.uniform(-1.0, 1.0);
            } else {
                const double f = f0 * std::pow(2.0, o.detune_cents / 1200.0);
                for (std::size_t i = start; i < stop; ++i) {
                    const double t = static_cast<double>(i - start) / sample_rate;
                    x[i] += w * detail::osc_sample(o.wave, f * t);
                }
            }
        }
        for (std::size_t i = start; i < stop; ++i) {
            const double t = static_cast<double>(i - start) / sample_rate;
            x[i] *= detail::adsr_value(patch.envelope, t, note.duration);
        }
    }

    const double gain = patch.master_gain * velocity_to_amplitude(note.velocity);
    for (double& v : x) v *= gain;

    detail::apply_biquad(x, patch.filter.type, patch.filter.cutoff_hz, patch.filter.resonance,
                         sample_rate);
    detail::apply_effects(x, patch.effects, sample_rate);

    double pk = 0.0;
    for (double v : x) pk = std::max(pk, std::abs(v));
    if (pk > 1.0) {
        const double s = 0.99 / pk;
        for (double& v : x) v *= s;
    }
    return AudioBuffer{std::move(x), sample_rate};
}

// Sum of per-note renders placed at their onsets. Monophonic: overlapping
// notes are rejected.
inline AudioBuffer render_score(const InstrumentPatch& patch, const std::vector<NoteEvent>& notes,
                                double sample_rate, double length) {
    std::vector<NoteEvent> sorted = notes;
    std::sort(sorted.begin(), sorted.end(),
              [](const NoteEvent& a, const NoteEvent& b) { return a.onset < b.onset; });
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i)
        if (sorted[i].onset + sorted[i].duration > sorted[i + 1].onset)
            throw std::invalid_argument("overlapping notes (monophonic contract)");
    for (const NoteEvent& nt : sorted)
        if (nt.onset + nt.duration > length)
            throw std::invalid_argument("note extends past score length");
    validate_patch(patch, sample_rate);

    const auto n = static_cast<std::size_t>(std::ceil(length * sample_rate));
    std::vector<double> acc(n, 0.0);
    for (const NoteEvent& nt : sorted) {
        NoteEvent clipped = nt;
        // release may be cut by the score end
        double needed = nt.onset + nt.duration + patch.envelope.release;
        AudioBuffer one = needed <= length
                              ? render_note(patch, clipped, sample_rate, length)
                              : [&] {
                                    InstrumentPatch p = patch;
                                    p.envelope.release =
                                        std::max(0.0, length - nt.onset - nt.duration);
                                    return render_note(p, clipped, sample_rate, length);
                                }();
        for (std::size_t i = 0; i < n; ++i) acc[i] += one.samples[i];
    }
    double pk = 0.0;
    for (double v : acc) pk = std::max(pk, std::abs(v));
    if (pk > 1.0) {
        const double s = 0.99 / pk;
        for (double& v : acc) v *= s;
    }
    return AudioBuffer{std::move(acc), sample_rate};
}

// Effect-removal augmentation: same synthesis parameters, empty chain, new id.
inline InstrumentPatch strip_effects(const InstrumentPatch& patch) {
    InstrumentPatch out = patch;
    out.effects.clear();
    out.id = patch.id + kAugmentIdOffset;
    out.augmented_from = patch.id;
    return out;
}

namespace detail {

inline Oscillator make_osc(Rng& rng, std::initializer_list<Waveform> waves, double amp_lo,
                           double amp_hi, double max_detune) {
    Oscillator o;
    o.wave = *(waves.begin() + rng.uniform_int(0, static_cast<int>(waves.size()) - 1));
    o.amplitude = rng.uniform(amp_lo, amp_hi);
    o.detune_cents = rng.uniform(-max_detune, max_detune);
    return o;
}

inline EffectChain draw_effects(Rng& rng, double p_reverb, double p_delay, double p_dist,
                                double p_chorus) {
    EffectChain chain;
    if (rng.bernoulli(p_dist)) chain.push_back(DistortionFx{rng.uniform(1.5, 6.0)});
    if (rng.bernoulli(p_chorus)) chain.push_back(ChorusFx{rng.uniform(0.3, 2.0), rng.uniform(0.2, 0.9)});
    if (rng.bernoulli(p_delay))
        chain.push_back(DelayFx{rng.uniform(0.12, 0.4), rng.uniform(0.2, 0.6), rng.uniform(0.2, 0.5)});
    if (rng.bernoulli(p_reverb)) chain.push_back(ReverbFx{rng.uniform(0.5, 2.5), rng.uniform(0.15, 0.45)});
    return chain;
}

inline InstrumentPatch draw_patch(Family family, Rng& rng) {
    InstrumentPatch p;
    p.family = family;
    auto& env = p.envelope;
    switch (family) {
        case Family::bass:
            p.oscillators.push_back(make_osc(rng, {Waveform::saw, Waveform::square, Waveform::sine}, 0.6, 1.0, 8));
            if (rng.bernoulli(0.5))
                p.oscillators.push_back(make_osc(rng, {Waveform::saw, Waveform::square}, 0.2, 0.6, 12));
            env = {rng.uniform(0.001, 0.02), rng.uniform(0.05, 0.3), rng.uniform(0.5, 0.9),
                   rng.uniform(0.05, 0.3)};
            p.filter = {FilterType::lowpass, rng.uniform(150.0, 900.0), rng.uniform(0.7, 1.8)};
            p.effects = draw_effects(rng, 0.15, 0.1, 0.25, 0.1);
            break;
        case Family::percussion:
            // noise burst + pitched body
            p.oscillators.push_back(make_osc(rng, {Waveform::noise}, 0.4, 1.0, 0));
            p.oscillators.push_back(make_osc(rng, {Waveform::sine, Waveform::triangle}, 0.2, 0.7, 30));
            env = {rng.uniform(0.0, 0.004), rng.uniform(0.05, 0.4), rng.uniform(0.0, 0.15),
                   rng.uniform(0.02, 0.2)};
            if (rng.bernoulli(0.6))
                p.filter = {rng.bernoulli(0.5) ? FilterType::lowpass : FilterType::highpass,
                            rng.uniform(400.0, 5000.0), rng.uniform(0.6, 1.2)};
            p.effects = draw_effects(rng, 0.35, 0.1, 0.1, 0.05);
            break;
        case Family::strings:
            p.oscillators.push_back(make_osc(rng, {Waveform::saw}, 0.6, 1.0, 6));
            p.oscillators.push_back(make_osc(rng, {Waveform::saw}, 0.4, 0.8, 14));
            env = {rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.3), rng.uniform(0.7, 0.95),
                   rng.uniform(0.2, 0.6)};
            p.filter = {FilterType::lowpass, rng.uniform(1200.0, 6000.0), rng.uniform(0.6, 1.0)};
            p.effects = draw_effects(rng, 0.5, 0.05, 0.0, 0.35);
            break;
        case Family::brass:
            p.oscillators.push_back(make_osc(rng, {Waveform::saw}, 0.7, 1.0, 5));
            if (rng.bernoulli(0.4))
                p.oscillators.push_back(make_osc(rng, {Waveform::square}, 0.2, 0.5, 8));
            env = {rng.uniform(0.02, 0.08), rng.uniform(0.05, 0.2), rng.uniform(0.75, 0.95),
                   rng.uniform(0.1, 0.3)};
            p.filter = {FilterType::lowpass, rng.uniform(900.0, 4500.0), rng.uniform(0.8, 1.6)};
            p.effects = draw_effects(rng, 0.3, 0.1, 0.1, 0.1);
            break;
        case Family::synth_lead:
            p.oscillators.push_back(make_osc(rng, {Waveform::saw, Waveform::square}, 0.7, 1.0, 6));
            if (rng.bernoulli(0.6))
                p.oscillators.push_back(make_osc(rng, {Waveform::saw, Waveform::square, Waveform::triangle}, 0.3, 0.7, 15));
            env = {rng.uniform(0.001, 0.05), rng.uniform(0.05, 0.25), rng.uniform(0.7, 1.0),
                   rng.uniform(0.05, 0.3)};
            p.filter = {FilterType::lowpass, rng.uniform(1500.0, 7000.0), rng.uniform(0.7, 2.5)};
            p.effects = draw_effects(rng, 0.2, 0.25, 0.25, 0.15);
            break;
        case Family::synth_pad:
            p.oscillators.push_back(make_osc(rng, {Waveform::saw, Waveform::triangle}, 0.5, 1.0, 8));
            p.oscillators.push_back(make_osc(rng, {Waveform::saw, Waveform::sine}, 0.3, 0.8, 18));
            if (rng.bernoulli(0.5))
                p.oscillators.push_back(make_osc(rng, {Waveform::triangle, Waveform::sine}, 0.2, 0.5, 25));
            env = {rng.uniform(0.3, 1.0), rng.uniform(0.2, 0.6), rng.uniform(0.8, 1.0),
                   rng.uniform(0.5, 1.5)};
            p.filter = {FilterType::lowpass, rng.uniform(800.0, 5000.0), rng.uniform(0.5, 1.0)};
            p.effects = draw_effects(rng, 0.6, 0.1, 0.0, 0.5);
            break;
        case Family::keyboard:
            p.oscillators.push_back(make_osc(rng, {Waveform::sine, Waveform::triangle}, 0.6, 1.0, 4));
            if (rng.bernoulli(0.5))
                p.oscillators.push_back(make_osc(rng, {Waveform::triangle, Waveform::square}, 0.2, 0.5, 7));
            env = {rng.uniform(0.001, 0.01), rng.uniform(0.2, 1.0), rng.uniform(0.2, 0.5),
                   rng.uniform(0.1, 0.4)};
            if (rng.bernoulli(0.5))
                p.filter = {FilterType::lowpass, rng.uniform(1500.0, 6500.0), rng.uniform(0.6, 1.0)};
            p.effects = draw_effects(rng, 0.3, 0.1, 0.05, 0.2);
            break;
        case Family::guitar:
            p.oscillators.push_back(make_osc(rng, {Waveform::saw, Waveform::triangle}, 0.6, 1.0, 6));
            env = {rng.uniform(0.002, 0.01), rng.uniform(0.3, 1.0), rng.uniform(0.1, 0.4),
                   rng.uniform(0.1, 0.4)};
            p.filter = {FilterType::lowpass, rng.uniform(1000.0, 5500.0), rng.uniform(0.6, 1.2)};
            p.effects = draw_effects(rng, 0.25, 0.2, 0.35, 0.2);
            break;
        case Family::flute:
            p.oscillators.push_back(make_osc(rng, {Waveform::sine}, 0.8, 1.0, 3));
            if (rng.bernoulli(0.5))
                p.oscillators.push_back(make_osc(rng, {Waveform::triangle}, 0.1, 0.3, 5));
            env = {rng.uniform(0.05, 0.15), rng.uniform(0.05, 0.2), rng.uniform(0.8, 0.95),
                   rng.uniform(0.1, 0.3)};
            p.effects = draw_effects(rng, 0.4, 0.05, 0.0, 0.1);
            break;
        case Family::reed:
            p.oscillators.push_back(make_osc(rng, {Waveform::square}, 0.7, 1.0, 4));
            if (rng.bernoulli(0.4))
                p.oscillators.push_back(make_osc(rng, {Waveform::saw}, 0.2, 0.5, 6));
            env = {rng.uniform(0.02, 0.06), rng.uniform(0.05, 0.2), rng.uniform(0.75, 0.9),
                   rng.uniform(0.1, 0.25)};
            p.filter = {FilterType::lowpass, rng.uniform(1000.0, 5000.0), rng.uniform(0.7, 1.4)};
            p.effects = draw_effects(rng, 0.3, 0.05, 0.05, 0.1);
            break;
        case Family::mallet:
            p.oscillators.push_back(make_osc(rng, {Waveform::sine}, 0.7, 1.0, 4));
            p.oscillators.push_back(make_osc(rng, {Waveform::sine, Waveform::triangle}, 0.2, 0.6, 60));
            env = {rng.uniform(0.0, 0.004), rng.uniform(0.2, 0.8), rng.uniform(0.0, 0.2),
                   rng.uniform(0.2, 0.6)};
            p.effects = draw_effects(rng, 0.45, 0.1, 0.0, 0.1);
            break;
        case Family::organ:
            p.oscillators.push_back(make_osc(rng, {Waveform::sine}, 0.7, 1.0, 2));
            p.oscillators.push_back(make_osc(rng, {Waveform::sine}, 0.3, 0.7, 1203));  // ~octave drawbar
            if (rng.bernoulli(0.6))
                p.oscillators.push_back(make_osc(rng, {Waveform::sine}, 0.2, 0.5, 1902));
            env = {rng.uniform(0.004, 0.02), rng.uniform(0.01, 0.05), rng.uniform(0.9, 1.0),
                   rng.uniform(0.02, 0.1)};
            p.effects = draw_effects(rng, 0.3, 0.05, 0.05, 0.4);
            break;
    }
    p.master_gain = rng.uniform(0.5, 0.9);
    p.seed = rng.engine()();
    return p;
}

}  // namespace detail

// Deterministic bank: n_per_family patches for each requested family,
// ids contiguous from 0 in (family, index) order.
inline std::vector<InstrumentPatch> generate_bank(int n_per_family,
                                                  const std::vector<Family>& families,
                                                  std::uint64_t seed) {
    if (n_per_family < 1) throw std::invalid_argument("n_per_family must be >= 1");
    if (families.empty()) throw std::invalid_argument("empty family set");
    std::vector<Family> ordered = families;
    std::sort(ordered.begin(), ordered.end());
    ordered.erase(std::unique(ordered.begin(), ordered.end()), ordered.end());

    std::vector<InstrumentPatch> bank;
    bank.reserve(static_cast<std::size_t>(n_per_family) * ordered.size());
    int next_id = 0;
    for (Family f : ordered) {
        for (int i = 0; i < n_per_family; ++i) {
            Rng rng(seed, static_cast<std::uint64_t>(f), static_cast<std::uint64_t>(i));
            InstrumentPatch p = detail::draw_patch(f, rng);
            p.id = next_id++;
            bank.push_back(std::move(p));
        }
    }
    return bank;
}

// Appends an effect-stripped variant for every patch with a non-empty chain.
inline std::vector<InstrumentPatch> augment_bank(const std::vector<InstrumentPatch>& bank) {
    std::vector<InstrumentPatch> out = bank;
    for (const InstrumentPatch& p : bank)
        if (!p.effects.empty()) out.push_back(strip_effects(p));
    return out;
}

}  // namespace timbre
