#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "timbre/dataset.hpp"
#include "timbre/errors.hpp"
#include "timbre/losses.hpp"

namespace timbre {

struct DatabaseEntry {
    int instrument_id = 0;
    Family family = Family::bass;
    Embedding vec;  // unit norm
};

struct EmbeddingDatabase {
    std::vector<DatabaseEntry> entries;
    std::string checkpoint_hash;           // provenance
    std::string policy = "median_note";    // how the per-instrument vector was made
};

using AudioEmbedder = std::function<Embedding(const AudioBuffer&)>;
using SoundRenderer = std::function<AudioBuffer(const SoundSpec&)>;
// slot index selects the output head for multi-encoders; single encoders ignore it
using MixtureEmbedder = std::function<Embedding(const AudioBuffer&, int slot)>;

// One entry per non-augmented instrument: a single note at the family's
// median pitch and velocity, rendered, embedded, stored.
inline EmbeddingDatabase build_database(const std::vector<InstrumentPatch>& bank,
                                        const std::map<Family, FamilyNoteDistribution>& dists,
                                        const AudioEmbedder& embedder, double sample_rate,
                                        const SamplingParams& sampling = {},
                                        const std::string& checkpoint_hash = "") {
    if (bank.empty()) throw std::invalid_argument("empty bank");
    EmbeddingDatabase db;
    db.checkpoint_hash = checkpoint_hash;
    for (const InstrumentPatch& p : bank) {
        if (p.augmented_from) continue;  // augmented instruments excluded
        const NoteEvent note = median_note(dists.at(p.family), sampling);
        const SoundSpec spec = make_single_note_spec(p.id, note, sampling);
        AudioBuffer buf = render_sound(p, spec, sample_rate);
        if (rms(buf) < kSilenceRmsThreshold)
            throw SilentStemError("median-note render of instrument " + std::to_string(p.id) +
                                  " is silent");
        Embedding e = embedder(buf);
        const double n = e.norm();
        if (n <= 0.0) throw std::invalid_argument("embedder returned a zero vector");
        db.entries.push_back({p.id, p.family, e / n});
    }
    return db;
}

struct QueryResult {
    std::vector<std::pair<int, double>> ranked;  // (instrument id, cosine distance) ascending
};

// Exact linear scan; ties broken by ascending instrument id.
inline QueryResult query(const EmbeddingDatabase& db, const Embedding& q, int k,
                         std::optional<Family> family_filter = std::nullopt) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    const double qn = q.norm();
    if (qn <= 0.0) throw std::invalid_argument("zero-norm query");
    QueryResult r;
    for (const DatabaseEntry& e : db.entries) {
        if (family_filter && e.family != *family_filter) continue;
        r.ranked.emplace_back(e.instrument_id, 1.0 - e.vec.dot(q) / qn);
    }
    if (r.ranked.empty()) throw std::invalid_argument("empty database after family filter");
    std::sort(r.ranked.begin(), r.ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second < b.second;
        return a.first < b.first;
    });
    if (static_cast<int>(r.ranked.size()) > k) r.ranked.resize(static_cast<std::size_t>(k));
    return r;
}

inline double chance_level(const EmbeddingDatabase& db, std::optional<Family> family_filter,
                           int k) {
    long n = 0;
    for (const DatabaseEntry& e : db.entries)
        if (!family_filter || e.family == *family_filter) ++n;
    if (n == 0) throw std::invalid_argument("empty database after family filter");
    return std::min(1.0, static_cast<double>(k) / static_cast<double>(n));
}

struct FamilyAccuracy {
    double top1 = 0.0;
    double top5 = 0.0;
    long queries = 0;
};

struct EvalReport {
    std::map<Family, FamilyAccuracy> per_family;
    double avg_top1 = 0.0;  // macro-average over families
    double avg_top5 = 0.0;
    long query_count = 0;
    std::string config_echo;
};

namespace detail {

inline void finalize_report(EvalReport& r) {
    double t1 = 0.0, t5 = 0.0;
    for (auto& [f, acc] : r.per_family) {
        acc.top1 /= static_cast<double>(acc.queries);
        acc.top5 /= static_cast<double>(acc.queries);
        t1 += acc.top1;
        t5 += acc.top5;
        r.query_count += acc.queries;
    }
    const auto nf = static_cast<double>(r.per_family.size());
    r.avg_top1 = t1 / nf;
    r.avg_top5 = t5 / nf;
}

inline bool hit_in_top(const QueryResult& r, int true_id, int k) {
    for (int i = 0; i < std::min<int>(k, static_cast<int>(r.ranked.size())); ++i)
        if (r.ranked[static_cast<std::size_t>(i)].first == true_id) return true;
    return false;
}

}  // namespace detail

// Top-k accuracy over the full database for single-source queries.
inline EvalReport evaluate_single_source(const EmbeddingDatabase& db, const AudioEmbedder& embedder,
                                         const SoundRenderer& renderer,
                                         const std::vector<std::pair<SoundSpec, int>>& test_sounds) {
    std::map<int, Family> family_of;
    for (const DatabaseEntry& e : db.entries) family_of[e.instrument_id] = e.family;

    EvalReport report;
    for (const auto& [spec, true_id] : test_sounds) {
        auto it = family_of.find(true_id);
        if (it == family_of.end())
            throw std::invalid_argument("true instrument " + std::to_string(true_id) +
                                        " missing from database");
        const Embedding q = embedder(renderer(spec));
        const QueryResult r = query(db, q, 5);
        FamilyAccuracy& acc = report.per_family[it->second];
        ++acc.queries;
        if (detail::hit_in_top(r, true_id, 1)) acc.top1 += 1.0;
        if (detail::hit_in_top(r, true_id, 5)) acc.top5 += 1.0;
    }
    if (report.per_family.empty()) throw std::invalid_argument("no test sounds");
    detail::finalize_report(report);
    return report;
}

// Mixture QbE: one query embedding per mixture (per slot for multi-encoders),
// ranked against the constituent's family entries only, unless global_ranking.
inline EvalReport evaluate_mixture(const EmbeddingDatabase& db, const MixtureEmbedder& embedder,
                                   const std::vector<std::pair<MixtureSpec, AudioBuffer>>& mixtures,
                                   bool global_ranking = false) {
    std::map<int, Family> family_of;
    for (const DatabaseEntry& e : db.entries) family_of[e.instrument_id] = e.family;

    EvalReport report;
    for (const auto& [spec, audio] : mixtures) {
        for (std::size_t slot = 0; slot < spec.components.size(); ++slot) {
            const int true_id = spec.components[slot].first;
            auto it = family_of.find(true_id);
            if (it == family_of.end())
                throw std::invalid_argument("constituent " + std::to_string(true_id) +
                                            " missing from database");
            const Embedding q = embedder(audio, static_cast<int>(slot));
            const QueryResult r =
                query(db, q, 5, global_ranking ? std::nullopt : std::optional<Family>(it->second));
            FamilyAccuracy& acc = report.per_family[it->second];
            ++acc.queries;
            if (detail::hit_in_top(r, true_id, 1)) acc.top1 += 1.0;
            if (detail::hit_in_top(r, true_id, 5)) acc.top5 += 1.0;
        }
    }
    if (report.per_family.empty()) throw std::invalid_argument("no test mixtures");
    detail::finalize_report(report);
    return report;
}

}  // namespace timbre
