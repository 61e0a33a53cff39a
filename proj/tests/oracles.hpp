// Independent test-side references. Nothing here calls into the library's
// implementation paths it is used to check.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

namespace oracle {

// Naive DFT magnitude at bin k over the first n samples.
inline double dft_bin_magnitude(const std::vector<double>& x, std::size_t n, std::size_t k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double ang = -2.0 * M_PI * static_cast<double>(k * i) / static_cast<double>(n);
        acc += x[i] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    return std::abs(acc);
}

// Frequency of the largest naive-DFT bin over the first n samples.
inline double dft_peak_frequency(const std::vector<double>& x, std::size_t n, double sample_rate) {
    double best = -1.0;
    std::size_t best_k = 0;
    for (std::size_t k = 1; k <= n / 2; ++k) {
        const double m = dft_bin_magnitude(x, n, k);
        if (m > best) {
            best = m;
            best_k = k;
        }
    }
    return static_cast<double>(best_k) * sample_rate / static_cast<double>(n);
}

// Short-time RMS envelope with the given window/hop (samples).
inline std::vector<double> rms_envelope(const std::vector<double>& x, std::size_t win,
                                        std::size_t hop) {
    std::vector<double> env;
    for (std::size_t start = 0; start + win <= x.size(); start += hop) {
        double acc = 0.0;
        for (std::size_t i = start; i < start + win; ++i) acc += x[i] * x[i];
        env.push_back(std::sqrt(acc / static_cast<double>(win)));
    }
    return env;
}

inline double energy(const std::vector<double>& x, std::size_t begin, std::size_t end) {
    double acc = 0.0;
    for (std::size_t i = begin; i < std::min(end, x.size()); ++i) acc += x[i] * x[i];
    return acc;
}

}  // namespace oracle

// --- naive loss references ---------------------------------------------------
// Double/triple loops written from the definitions, sharing nothing with the
// library's vectorized implementations beyond the label enum.

#include <Eigen/Dense>
#include <timbre/losses.hpp>

namespace oracle {

inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return a.dot(b) / (a.norm() * b.norm());
}

inline double infonce_reference(const std::vector<Eigen::VectorXd>& e,
                                const timbre::TargetSimilarityMatrix& t, double tau) {
    const int n = static_cast<int>(e.size());
    double loss = 0.0;
    int pairs = 0;
    for (int a = 0; a < n; ++a) {
        for (int p = 0; p < n; ++p) {
            if (t.at(a, p) != timbre::PairLabel::positive) continue;
            double denom = 0.0;
            for (int x = 0; x < n; ++x) {
                if (x == a || t.at(a, x) == timbre::PairLabel::ignore) continue;
                denom += std::exp(cosine(e[static_cast<std::size_t>(a)],
                                         e[static_cast<std::size_t>(x)]) / tau);
            }
            loss += -std::log(std::exp(cosine(e[static_cast<std::size_t>(a)],
                                              e[static_cast<std::size_t>(p)]) / tau) / denom);
            ++pairs;
        }
    }
    return loss / pairs;
}

struct TripletReference {
    double loss = 0.0;
    long count = 0;
};

inline TripletReference triplet_reference(const std::vector<Eigen::VectorXd>& e,
                                          const timbre::TargetSimilarityMatrix& t, double margin,
                                          timbre::TripletAnchorMode mode,
                                          const std::vector<bool>& is_mixture) {
    const int n = static_cast<int>(e.size());
    TripletReference out;
    double total = 0.0;
    for (int a = 0; a < n; ++a) {
        const bool mix = !is_mixture.empty() && is_mixture[static_cast<std::size_t>(a)];
        if (mode == timbre::TripletAnchorMode::singles_and_pairs && mix) continue;
        if (mode == timbre::TripletAnchorMode::mixture_anchored && !mix) continue;
        for (int p = 0; p < n; ++p) {
            if (t.at(a, p) != timbre::PairLabel::positive) continue;
            for (int neg = 0; neg < n; ++neg) {
                if (t.at(a, neg) != timbre::PairLabel::negative) continue;
                const double dap = 1.0 - cosine(e[static_cast<std::size_t>(a)],
                                                e[static_cast<std::size_t>(p)]);
                const double dan = 1.0 - cosine(e[static_cast<std::size_t>(a)],
                                                e[static_cast<std::size_t>(neg)]);
                total += std::max(0.0, dap - dan + margin);
                ++out.count;
            }
        }
    }
    out.loss = out.count > 0 ? total / static_cast<double>(out.count) : 0.0;
    return out;
}

inline double multi_encoder_reference(const std::vector<Eigen::VectorXd>& outputs,
                                      const std::vector<Eigen::VectorXd>& targets) {
    double loss = 0.0;
    for (std::size_t k = 0; k < outputs.size(); ++k) loss += 1.0 - cosine(outputs[k], targets[k]);
    return loss / static_cast<double>(outputs.size());
}

// Rule-based target-matrix enumerator over an abstract batch shape: each item
// is a set of instrument ids (singleton = single-source sound).
inline timbre::TargetSimilarityMatrix enumerate_targets(
    const std::vector<std::vector<int>>& item_instruments) {
    const int n = static_cast<int>(item_instruments.size());
    timbre::TargetSimilarityMatrix t(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) {
                t.at(i, j) = timbre::PairLabel::ignore;
                continue;
            }
            const auto& a = item_instruments[static_cast<std::size_t>(i)];
            const auto& b = item_instruments[static_cast<std::size_t>(j)];
            const bool a_single = a.size() == 1, b_single = b.size() == 1;
            bool pos = false;
            if (a_single && b_single) {
                pos = a[0] == b[0];
            } else if (!a_single && !b_single) {
                pos = false;  // mixture pairs are negative
            } else {
                const auto& mix = a_single ? b : a;
                const int single = a_single ? a[0] : b[0];
                for (int id : mix) pos = pos || id == single;
            }
            t.at(i, j) = pos ? timbre::PairLabel::positive : timbre::PairLabel::negative;
        }
    }
    return t;
}

}  // namespace oracle
