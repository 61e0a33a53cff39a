#pragma once

#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "timbre/dataset.hpp"

namespace timbre {

using Embedding = Eigen::VectorXd;

enum class PairLabel : int { negative = 0, positive = 1, ignore = 2 };

struct TargetSimilarityMatrix {
    int n = 0;
    std::vector<PairLabel> labels;  // row-major n*n

    explicit TargetSimilarityMatrix(int size = 0)
        : n(size), labels(static_cast<std::size_t>(size) * static_cast<std::size_t>(size),
                          PairLabel::negative) {}
    PairLabel& at(int i, int j) { return labels[static_cast<std::size_t>(i) * n + j]; }
    PairLabel at(int i, int j) const { return labels[static_cast<std::size_t>(i) * n + j]; }
};

namespace detail {
inline std::set<int> mixture_instruments(const MixtureSpec& m) {
    std::set<int> s;
    for (const auto& [id, stem] : m.components) s.insert(id);
    return s;
}
}  // namespace detail

// Pairwise label matrix for a batch:
//   single/single   positive iff same instrument
//   mixture/single  positive iff the single's instrument is a constituent
//   mixture/mixture negative
//   diagonal        ignore
inline TargetSimilarityMatrix build_target_matrix(const BatchSpec& batch) {
    const int n = static_cast<int>(batch.items.size());
    TargetSimilarityMatrix t(n);

    // duplicate instruments across mixtures are malformed
    std::set<int> seen;
    for (const auto& item : batch.items) {
        if (const auto* m = std::get_if<MixtureSpec>(&item)) {
            for (int id : detail::mixture_instruments(*m)) {
                if (seen.count(id))
                    throw std::invalid_argument("instrument " + std::to_string(id) +
                                                " appears in two mixtures");
                seen.insert(id);
            }
        }
    }

    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) {
                t.at(i, j) = PairLabel::ignore;
                continue;
            }
            const auto* si = std::get_if<SoundSpec>(&batch.items[static_cast<std::size_t>(i)]);
            const auto* sj = std::get_if<SoundSpec>(&batch.items[static_cast<std::size_t>(j)]);
            const auto* mi = std::get_if<MixtureSpec>(&batch.items[static_cast<std::size_t>(i)]);
            const auto* mj = std::get_if<MixtureSpec>(&batch.items[static_cast<std::size_t>(j)]);
            bool pos = false;
            if (si && sj) {
                pos = si->instrument_id == sj->instrument_id;
            } else if (mi && sj) {
                pos = detail::mixture_instruments(*mi).count(sj->instrument_id) > 0;
            } else if (si && mj) {
                pos = detail::mixture_instruments(*mj).count(si->instrument_id) > 0;
            }  // mixture/mixture stays negative
            t.at(i, j) = pos ? PairLabel::positive : PairLabel::negative;
        }
    }
    return t;
}

inline std::vector<bool> mixture_flags(const BatchSpec& batch) {
    std::vector<bool> f;
    f.reserve(batch.items.size());
    for (const auto& item : batch.items)
        f.push_back(std::holds_alternative<MixtureSpec>(item));
    return f;
}

struct LossOutput {
    double loss = 0.0;
    std::vector<Embedding> embedding_grads;
    // smallest |slack| over hinge terms; embedding-space distance to the
    // nearest kink (triplet loss only)
    double kink_margin = std::numeric_limits<double>::infinity();
    long triplet_count = 0;
};

namespace detail {

struct CosineBatch {
    std::vector<Embedding> unit;
    std::vector<double> norm;
    Eigen::MatrixXd sim;

    explicit CosineBatch(const std::vector<Embedding>& embs) {
        const int n = static_cast<int>(embs.size());
        unit.resize(static_cast<std::size_t>(n));
        norm.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            norm[static_cast<std::size_t>(i)] = embs[static_cast<std::size_t>(i)].norm();
            if (norm[static_cast<std::size_t>(i)] <= 0.0)
                throw std::invalid_argument("zero-norm embedding in loss");
            unit[static_cast<std::size_t>(i)] =
                embs[static_cast<std::size_t>(i)] / norm[static_cast<std::size_t>(i)];
        }
        sim.resize(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                sim(i, j) = unit[static_cast<std::size_t>(i)].dot(unit[static_cast<std::size_t>(j)]);
    }

    // d(sim(i,j))/d(emb_i) scaled by g, accumulated into grads
    void add_sim_grad(std::vector<Embedding>& grads, int i, int j, double g) const {
        const auto iu = static_cast<std::size_t>(i);
        const auto ju = static_cast<std::size_t>(j);
        grads[iu] += g * (unit[ju] - sim(i, j) * unit[iu]) / norm[iu];
        grads[ju] += g * (unit[iu] - sim(i, j) * unit[ju]) / norm[ju];
    }
};

inline std::vector<Embedding> zero_grads(const std::vector<Embedding>& embs) {
    std::vector<Embedding> g;
    g.reserve(embs.size());
    for (const auto& e : embs) g.push_back(Embedding::Zero(e.size()));
    return g;
}

}  // namespace detail

// Multi-positive InfoNCE: mean over (anchor, positive) pairs of
// -log( exp(s(a,p)/tau) / sum_{x in candidates(a)} exp(s(a,x)/tau) ),
// candidates(a) = all non-ignore entries of row a. Anchors without a
// positive are excluded from the mean.
inline LossOutput infonce_loss(const std::vector<Embedding>& embs,
                               const TargetSimilarityMatrix& targets, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("temperature must be > 0");
    const int n = static_cast<int>(embs.size());
    if (n != targets.n) throw std::invalid_argument("embedding/target size mismatch");
    detail::CosineBatch cb(embs);

    // count (a,p) pairs
    int total_pairs = 0;
    for (int a = 0; a < n; ++a)
        for (int j = 0; j < n; ++j)
            if (targets.at(a, j) == PairLabel::positive) ++total_pairs;
    if (total_pairs == 0) throw std::invalid_argument("no anchor has a positive");

    LossOutput out;
    out.embedding_grads = detail::zero_grads(embs);
    for (int a = 0; a < n; ++a) {
        std::vector<int> cands, pos;
        for (int j = 0; j < n; ++j) {
            if (targets.at(a, j) == PairLabel::ignore) continue;
            cands.push_back(j);
            if (targets.at(a, j) == PairLabel::positive) pos.push_back(j);
        }
        if (pos.empty()) continue;

        // log-sum-exp over candidates, stabilized
        double mx = -std::numeric_limits<double>::infinity();
        for (int j : cands) mx = std::max(mx, cb.sim(a, j) / tau);
        double z = 0.0;
        for (int j : cands) z += std::exp(cb.sim(a, j) / tau - mx);
        const double log_z = mx + std::log(z);

        for (int p : pos) out.loss += log_z - cb.sim(a, p) / tau;

        const double np = static_cast<double>(pos.size());
        for (int j : cands) {
            const double softmax = std::exp(cb.sim(a, j) / tau - mx) / z;
            double g = np * softmax / tau;
            if (targets.at(a, j) == PairLabel::positive) g -= 1.0 / tau;
            cb.add_sim_grad(out.embedding_grads, a, j, g / total_pairs);
        }
    }
    out.loss /= total_pairs;
    return out;
}

enum class TripletAnchorMode { singles_and_pairs, mixture_anchored, full };

// Mean over valid (anchor, positive, negative) triplets of
// max(0, d(a,p) - d(a,n) + margin), d = 1 - cosine similarity.
inline LossOutput triplet_loss(const std::vector<Embedding>& embs,
                               const TargetSimilarityMatrix& targets, double margin,
                               TripletAnchorMode mode, const std::vector<bool>& is_mixture = {}) {
    if (margin < 0.0) throw std::invalid_argument("margin must be >= 0");
    const int n = static_cast<int>(embs.size());
    if (n != targets.n) throw std::invalid_argument("embedding/target size mismatch");
    detail::CosineBatch cb(embs);

    auto anchor_ok = [&](int a) {
        const bool mix = !is_mixture.empty() && is_mixture[static_cast<std::size_t>(a)];
        switch (mode) {
            case TripletAnchorMode::singles_and_pairs: return !mix;
            case TripletAnchorMode::mixture_anchored: return mix;
            case TripletAnchorMode::full: return true;
        }
        return false;
    };

    // first pass: count triplets
    long count = 0;
    for (int a = 0; a < n; ++a) {
        if (!anchor_ok(a)) continue;
        long np = 0, nn = 0;
        for (int j = 0; j < n; ++j) {
            if (targets.at(a, j) == PairLabel::positive) ++np;
            if (targets.at(a, j) == PairLabel::negative) ++nn;
        }
        count += np * nn;
    }
    if (count == 0) throw std::invalid_argument("no valid triplet for this anchor mode");

    LossOutput out;
    out.triplet_count = count;
    out.embedding_grads = detail::zero_grads(embs);
    for (int a = 0; a < n; ++a) {
        if (!anchor_ok(a)) continue;
        for (int p = 0; p < n; ++p) {
            if (targets.at(a, p) != PairLabel::positive) continue;
            for (int neg = 0; neg < n; ++neg) {
                if (targets.at(a, neg) != PairLabel::negative) continue;
                const double slack = cb.sim(a, neg) - cb.sim(a, p) + margin;
                out.kink_margin = std::min(out.kink_margin, std::abs(slack));
                if (slack > 0.0) {
                    out.loss += slack;
                    cb.add_sim_grad(out.embedding_grads, a, neg, 1.0 / count);
                    cb.add_sim_grad(out.embedding_grads, a, p, -1.0 / count);
                }
            }
        }
    }
    out.loss /= static_cast<double>(count);
    return out;
}

// Slot-aligned distillation: mean over slots of cosine distance between each
// head output and its frozen target. No permutation search.
inline LossOutput multi_encoder_loss(const std::vector<Embedding>& outputs,
                                     const std::vector<Embedding>& frozen_targets) {
    if (outputs.size() != frozen_targets.size() || outputs.empty())
        throw std::invalid_argument("output/target slot count mismatch");
    const auto k = static_cast<double>(outputs.size());
    LossOutput out;
    out.embedding_grads = detail::zero_grads(outputs);
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        const double on = outputs[i].norm();
        const double tn = frozen_targets[i].norm();
        if (on <= 0.0 || tn <= 0.0) throw std::invalid_argument("zero-norm vector in loss");
        const Embedding ou = outputs[i] / on;
        const Embedding tu = frozen_targets[i] / tn;
        const double s = ou.dot(tu);
        out.loss += (1.0 - s) / k;
        out.embedding_grads[i] = -(tu - s * ou) / on / k;
    }
    return out;
}

}  // namespace timbre
