#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <variant>
#include <vector>

#include "timbre/audio.hpp"
#include "timbre/errors.hpp"
#include "timbre/rng.hpp"
#include "timbre/synth.hpp"

namespace timbre {

inline constexpr double kSilenceRmsThreshold = 1e-4;

struct FamilyNoteDistribution {
    Family family = Family::bass;
    std::vector<double> pitch_hist;     // over MIDI pitch [0,127]
    std::vector<double> velocity_hist;  // over velocity [1,127]; index i -> velocity i+1
};

enum class SoundKind { single_note, score };

struct SoundSpec {
    int instrument_id = 0;
    SoundKind kind = SoundKind::single_note;
    std::vector<NoteEvent> notes;
    double length = 4.0;
};

struct MixtureSpec {
    // one (instrument, stem) per required family slot
    std::vector<std::pair<int, SoundSpec>> components;
    double length = 6.0;
};

using BatchItem = std::variant<SoundSpec, MixtureSpec>;

enum class ItemRole { anchor, positive, mixture, constituent };

struct BatchSpec {
    std::vector<BatchItem> items;
    std::vector<ItemRole> roles;
};

struct SamplingParams {
    double note_duration = 3.0;  // single-note sustain
    double note_length = 4.0;    // single-note file length
    double score_length = 6.0;
    double score_density = 0.8;  // notes per second
};

inline int item_instrument(const BatchItem& item) {
    if (const auto* s = std::get_if<SoundSpec>(&item)) return s->instrument_id;
    return -1;
}

// --- family note distributions -------------------------------------------

namespace detail {

struct NoteDistParams {
    double pitch_mean, pitch_std;
    double vel_mean, vel_std;
};

inline NoteDistParams note_dist_params(Family f) {
    switch (f) {
        case Family::bass: return {38, 6, 85, 18};
        case Family::percussion: return {50, 12, 95, 20};
        case Family::strings: return {62, 10, 75, 16};
        case Family::brass: return {58, 8, 90, 15};
        case Family::synth_lead: return {72, 9, 95, 15};
        case Family::synth_pad: return {60, 12, 70, 15};
        case Family::keyboard: return {64, 11, 80, 18};
        case Family::guitar: return {55, 9, 85, 18};
        case Family::flute: return {79, 8, 75, 14};
        case Family::reed: return {65, 8, 80, 15};
        case Family::mallet: return {72, 10, 85, 16};
        case Family::organ: return {60, 10, 80, 14};
    }
    throw std::invalid_argument("unknown family");
}

inline std::vector<double> truncated_normal_hist(double mean, double std, int lo, int hi,
                                                 int size, int offset) {
    std::vector<double> h(static_cast<std::size_t>(size), 0.0);
    double total = 0.0;
    for (int v = lo; v <= hi; ++v) {
        const double z = (static_cast<double>(v) - mean) / std;
        const double w = std::exp(-0.5 * z * z);
        h[static_cast<std::size_t>(v - offset)] = w;
        total += w;
    }
    for (double& w : h) w /= total;
    return h;
}

}  // namespace detail

// Discretized truncated normals; a parametric stand-in for per-family
// empirical MIDI statistics.
inline FamilyNoteDistribution family_distribution(Family f) {
    const auto p = detail::note_dist_params(f);
    FamilyNoteDistribution d;
    d.family = f;
    d.pitch_hist = detail::truncated_normal_hist(p.pitch_mean, p.pitch_std, 28, 100, 128, 0);
    d.velocity_hist = detail::truncated_normal_hist(p.vel_mean, p.vel_std, 20, 127, 127, 1);
    return d;
}

inline std::map<Family, FamilyNoteDistribution> all_family_distributions() {
    std::map<Family, FamilyNoteDistribution> m;
    for (Family f : kAllFamilies) m[f] = family_distribution(f);
    return m;
}

// Inverse-CDF sampling; avoids std::discrete_distribution so results are
// identical across standard library implementations.
inline int sample_histogram(const std::vector<double>& hist, Rng& rng) {
    const double u = rng.uniform(0.0, 1.0);
    double cum = 0.0;
    for (std::size_t i = 0; i < hist.size(); ++i) {
        cum += hist[i];
        if (u < cum) return static_cast<int>(i);
    }
    for (std::size_t i = hist.size(); i-- > 0;)
        if (hist[i] > 0.0) return static_cast<int>(i);
    throw std::invalid_argument("empty histogram");
}

inline int histogram_median(const std::vector<double>& hist) {
    double cum = 0.0;
    for (std::size_t i = 0; i < hist.size(); ++i) {
        cum += hist[i];
        if (cum >= 0.5) return static_cast<int>(i);
    }
    return static_cast<int>(hist.size()) - 1;
}

inline NoteEvent median_note(const FamilyNoteDistribution& dist,
                             const SamplingParams& sp = {}) {
    NoteEvent n;
    n.pitch = histogram_median(dist.pitch_hist);
    n.velocity = histogram_median(dist.velocity_hist) + 1;
    n.onset = 0.0;
    n.duration = sp.note_duration;
    return n;
}

inline NoteEvent sample_note(const FamilyNoteDistribution& dist, Rng& rng,
                             const SamplingParams& sp = {}) {
    NoteEvent n;
    n.pitch = sample_histogram(dist.pitch_hist, rng);
    n.velocity = sample_histogram(dist.velocity_hist, rng) + 1;
    n.onset = 0.0;
    n.duration = sp.note_duration;
    return n;
}

inline SoundSpec make_single_note_spec(int instrument_id, const NoteEvent& note,
                                       const SamplingParams& sp = {}) {
    SoundSpec s;
    s.instrument_id = instrument_id;
    s.kind = SoundKind::single_note;
    NoteEvent n = note;
    n.onset = 0.0;
    s.notes = {n};
    s.length = sp.note_length;
    return s;
}

// Poisson note arrivals with exponential gaps; durations truncated so notes
// never overlap. Redraws until at least one note lands.
inline SoundSpec generate_score(const FamilyNoteDistribution& dist, double length, double density,
                                Rng& rng, int instrument_id = 0) {
    if (density <= 0.0) throw std::invalid_argument("density must be > 0");
    SoundSpec s;
    s.instrument_id = instrument_id;
    s.kind = SoundKind::score;
    s.length = length;
    while (true) {
        std::vector<double> onsets;
        double t = rng.exponential(density);
        while (t < length) {
            onsets.push_back(t);
            t += rng.exponential(density);
        }
        if (onsets.empty()) continue;
        s.notes.clear();
        for (std::size_t i = 0; i < onsets.size(); ++i) {
            NoteEvent n;
            n.pitch = sample_histogram(dist.pitch_hist, rng);
            n.velocity = sample_histogram(dist.velocity_hist, rng) + 1;
            n.onset = onsets[i];
            const double gap = (i + 1 < onsets.size() ? onsets[i + 1] : length) - onsets[i];
            n.duration = std::min(rng.uniform(0.3, 1.2), gap);
            s.notes.push_back(n);
        }
        return s;
    }
}

// Positive-pair sampling: two independent sounds of one instrument, each
// independently a single note or a note sequence.
inline std::pair<SoundSpec, SoundSpec> draw_positive_pair(const InstrumentPatch& patch,
                                                          const FamilyNoteDistribution& dist,
                                                          Rng& rng,
                                                          const SamplingParams& sp = {}) {
    auto draw_one = [&]() {
        if (rng.bernoulli(0.5)) return make_single_note_spec(patch.id, sample_note(dist, rng, sp), sp);
        return generate_score(dist, sp.score_length, sp.score_density, rng, patch.id);
    };
    return {draw_one(), draw_one()};
}

namespace detail {
// Deterministic Fisher-Yates (std::shuffle is implementation-defined).
template <class T>
inline void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
}
}  // namespace detail

// N sounds: N/2 distinct instruments, a positive pair for each.
inline BatchSpec build_single_source_batch(const std::vector<InstrumentPatch>& bank,
                                           const std::map<Family, FamilyNoteDistribution>& dists,
                                           int batch_size, Rng& rng,
                                           const SamplingParams& sp = {}) {
    if (batch_size < 2 || batch_size % 2 != 0)
        throw std::invalid_argument("batch size must be even and >= 2");
    const int n_instruments = batch_size / 2;
    if (static_cast<int>(bank.size()) < n_instruments)
        throw std::invalid_argument("bank too small for batch");

    std::vector<std::size_t> idx(bank.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    detail::shuffle(idx, rng);

    BatchSpec batch;
    for (int k = 0; k < n_instruments; ++k) {
        const InstrumentPatch& patch = bank[idx[static_cast<std::size_t>(k)]];
        auto [a, p] = draw_positive_pair(patch, dists.at(patch.family), rng, sp);
        batch.items.emplace_back(std::move(a));
        batch.roles.push_back(ItemRole::anchor);
        batch.items.emplace_back(std::move(p));
        batch.roles.push_back(ItemRole::positive);
    }
    return batch;
}

// n_mixtures mixtures (one stem per family slot) followed by one single-note
// positive per constituent. Instruments are disjoint across the whole batch.
inline BatchSpec build_mixture_batch(const std::vector<InstrumentPatch>& bank,
                                     const std::map<Family, FamilyNoteDistribution>& dists,
                                     int n_mixtures, const std::vector<Family>& family_slots,
                                     Rng& rng, const SamplingParams& sp = {}) {
    if (n_mixtures < 1) throw std::invalid_argument("need at least one mixture");
    if (family_slots.empty()) throw std::invalid_argument("empty family slot list");

    std::map<Family, std::vector<std::size_t>> by_family;
    for (std::size_t i = 0; i < bank.size(); ++i) by_family[bank[i].family].push_back(i);
    std::map<Family, int> needed;
    for (Family f : family_slots) needed[f] += n_mixtures;
    for (auto& [f, count] : needed) {
        auto it = by_family.find(f);
        if (it == by_family.end() || static_cast<int>(it->second.size()) < count)
            throw std::invalid_argument(std::string("not enough instruments of family ") +
                                        family_name(f));
        detail::shuffle(it->second, rng);
    }

    BatchSpec batch;
    std::map<Family, std::size_t> cursor;
    std::vector<const InstrumentPatch*> constituents;
    for (int m = 0; m < n_mixtures; ++m) {
        MixtureSpec mix;
        mix.length = sp.score_length;
        for (Family f : family_slots) {
            const InstrumentPatch& patch = bank[by_family[f][cursor[f]++]];
            SoundSpec stem =
                generate_score(dists.at(f), sp.score_length, sp.score_density, rng, patch.id);
            mix.components.emplace_back(patch.id, std::move(stem));
            constituents.push_back(&patch);
        }
        batch.items.emplace_back(std::move(mix));
        batch.roles.push_back(ItemRole::mixture);
    }
    for (const InstrumentPatch* patch : constituents) {
        batch.items.emplace_back(make_single_note_spec(
            patch->id, sample_note(dists.at(patch->family), rng, sp), sp));
        batch.roles.push_back(ItemRole::constituent);
    }
    return batch;
}

// Sample-wise sum; peak-normalized to 0.9 only when the sum would clip.
inline AudioBuffer mix_stems(const std::vector<AudioBuffer>& stems) {
    if (stems.empty()) throw std::invalid_argument("no stems to mix");
    const std::size_t n = stems.front().samples.size();
    const double sr = stems.front().sample_rate;
    for (std::size_t k = 0; k < stems.size(); ++k) {
        if (stems[k].samples.size() != n || stems[k].sample_rate != sr)
            throw std::invalid_argument("mismatched stem lengths or sample rates");
        if (rms(stems[k]) < kSilenceRmsThreshold)
            throw SilentStemError("stem " + std::to_string(k) + " is silent");
    }
    AudioBuffer out;
    out.sample_rate = sr;
    out.samples.assign(n, 0.0);
    for (const AudioBuffer& s : stems)
        for (std::size_t i = 0; i < n; ++i) out.samples[i] += s.samples[i];
    const double pk = peak(out);
    if (pk > 1.0) {
        const double scale = 0.9 / pk;
        for (double& v : out.samples) v *= scale;
    }
    return out;
}

// --- rendering of specs ----------------------------------------------------

// Renders a SoundSpec; release tails are clipped at the spec length, so any
// patch can render any spec.
inline AudioBuffer render_sound(const InstrumentPatch& patch, const SoundSpec& spec,
                                double sample_rate) {
    return render_score(patch, spec.notes, sample_rate, spec.length);
}

inline AudioBuffer render_mixture(const std::vector<InstrumentPatch>& bank,
                                  const MixtureSpec& mix, double sample_rate) {
    std::vector<AudioBuffer> stems;
    for (const auto& [id, stem] : mix.components) {
        auto it = std::find_if(bank.begin(), bank.end(),
                               [&](const InstrumentPatch& p) { return p.id == id; });
        if (it == bank.end())
            throw std::invalid_argument("mixture references unknown instrument " + std::to_string(id));
        stems.push_back(render_sound(*it, stem, sample_rate));
    }
    return mix_stems(stems);
}

}  // namespace timbre
