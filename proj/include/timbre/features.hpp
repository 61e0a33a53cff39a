#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "timbre/audio.hpp"
#include "timbre/errors.hpp"
#include "timbre/fft.hpp"

namespace timbre {

struct MelParams {
    int n_fft = 1024;
    int hop = 256;
    int n_mels = 64;
    double fmin = 30.0;
    double fmax = 7600.0;
    double energy_floor = 1e-5;  // output is ln(max(energy, energy_floor))

    double log_floor() const { return std::log(energy_floor); }
};

struct MelSpectrogram {
    Eigen::MatrixXd data;  // frames x n_mels, natural-log energies
    MelParams params;
};

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Center frequencies (Hz) of the triangular filters, HTK-style spacing.
inline std::vector<double> mel_filter_centers(const MelParams& p) {
    const double mlo = hz_to_mel(p.fmin), mhi = hz_to_mel(p.fmax);
    std::vector<double> centers(static_cast<std::size_t>(p.n_mels));
    for (int i = 1; i <= p.n_mels; ++i)
        centers[static_cast<std::size_t>(i - 1)] =
            mel_to_hz(mlo + (mhi - mlo) * static_cast<double>(i) / (p.n_mels + 1));
    return centers;
}

namespace detail {

// weights[m][k] over FFT bins 0..n_fft/2
inline std::vector<std::vector<double>> mel_filterbank(const MelParams& p, double sample_rate) {
    const int n_bins = p.n_fft / 2 + 1;
    const double mlo = hz_to_mel(p.fmin), mhi = hz_to_mel(p.fmax);
    std::vector<double> edges(static_cast<std::size_t>(p.n_mels) + 2);
    for (int i = 0; i < p.n_mels + 2; ++i)
        edges[static_cast<std::size_t>(i)] =
            mel_to_hz(mlo + (mhi - mlo) * static_cast<double>(i) / (p.n_mels + 1));
    std::vector<std::vector<double>> fb(static_cast<std::size_t>(p.n_mels),
                                        std::vector<double>(static_cast<std::size_t>(n_bins), 0.0));
    for (int m = 0; m < p.n_mels; ++m) {
        const double lo = edges[static_cast<std::size_t>(m)];
        const double c = edges[static_cast<std::size_t>(m) + 1];
        const double hi = edges[static_cast<std::size_t>(m) + 2];
        for (int k = 0; k < n_bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / p.n_fft;
            double w = 0.0;
            if (f > lo && f < hi) w = f <= c ? (f - lo) / (c - lo) : (hi - f) / (hi - c);
            fb[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)] = w;
        }
    }
    return fb;
}

inline std::vector<double> hann_window(int n) {
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        w[static_cast<std::size_t>(i)] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / n));
    return w;
}

// Per-frame magnitude spectra, Hann window, no edge padding.
inline std::vector<std::vector<double>> stft_magnitudes(const AudioBuffer& audio, int n_fft,
                                                        int hop) {
    if (static_cast<int>(audio.samples.size()) < n_fft)
        throw std::invalid_argument("audio shorter than one analysis frame");
    const auto win = hann_window(n_fft);
    const std::size_t n_frames =
        (audio.samples.size() - static_cast<std::size_t>(n_fft)) / static_cast<std::size_t>(hop) + 1;
    std::vector<std::vector<double>> mags;
    mags.reserve(n_frames);
    std::vector<double> frame(static_cast<std::size_t>(n_fft));
    for (std::size_t f = 0; f < n_frames; ++f) {
        const std::size_t start = f * static_cast<std::size_t>(hop);
        for (int i = 0; i < n_fft; ++i)
            frame[static_cast<std::size_t>(i)] =
                audio.samples[start + static_cast<std::size_t>(i)] * win[static_cast<std::size_t>(i)];
        mags.push_back(magnitude_spectrum(frame));
    }
    return mags;
}

}  // namespace detail

inline MelSpectrogram mel_spectrogram(const AudioBuffer& audio, const MelParams& params = {}) {
    const auto mags = detail::stft_magnitudes(audio, params.n_fft, params.hop);
    const auto fb = detail::mel_filterbank(params, audio.sample_rate);
    MelSpectrogram out;
    out.params = params;
    out.data.resize(static_cast<Eigen::Index>(mags.size()), params.n_mels);
    for (std::size_t f = 0; f < mags.size(); ++f) {
        for (int m = 0; m < params.n_mels; ++m) {
            double e = 0.0;
            const auto& w = fb[static_cast<std::size_t>(m)];
            for (std::size_t k = 0; k < w.size(); ++k) e += w[k] * mags[f][k];
            out.data(static_cast<Eigen::Index>(f), m) = std::log(std::max(e, params.energy_floor));
        }
    }
    return out;
}

// --- handcrafted timbre descriptors -----------------------------------------

inline constexpr int kNumDescriptors = 12;

inline const std::vector<std::string>& descriptor_names() {
    static const std::vector<std::string> names = {
        "spectral_centroid", "spectral_spread", "spectral_skewness", "spectral_kurtosis",
        "spectral_flatness", "spectral_crest",  "rolloff_85",        "spectral_flux",
        "zero_crossing_rate", "log_attack_time", "temporal_centroid", "spectral_decrease"};
    return names;
}

using DescriptorVector = Eigen::Matrix<double, kNumDescriptors, 1>;

// Pitch- and loudness-excluded descriptor set. Spectral values are computed
// on the normalized time-averaged magnitude spectrum, temporal values on the
// normalized frame-energy envelope, so every entry satisfies D(ax) = D(x).
inline DescriptorVector timbre_descriptors(const AudioBuffer& audio, const MelParams& params = {}) {
    if (rms(audio) < 1e-4) throw SilentInputError("silent input to timbre_descriptors");
    const auto mags = detail::stft_magnitudes(audio, params.n_fft, params.hop);
    const std::size_t n_bins = mags.front().size();
    const double sr = audio.sample_rate;
    const double bin_hz = sr / params.n_fft;

    // normalized average spectrum
    std::vector<double> avg(n_bins, 0.0);
    for (const auto& m : mags)
        for (std::size_t k = 0; k < n_bins; ++k) avg[k] += m[k];
    double total = 0.0;
    for (double v : avg) total += v;
    std::vector<double> p(n_bins, 0.0);
    if (total > 0.0)
        for (std::size_t k = 0; k < n_bins; ++k) p[k] = avg[k] / total;

    const double centroid = [&] {
        double c = 0.0;
        for (std::size_t k = 0; k < n_bins; ++k) c += p[k] * (k * bin_hz);
        return c;
    }();
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (std::size_t k = 0; k < n_bins; ++k) {
        const double d = k * bin_hz - centroid;
        m2 += p[k] * d * d;
        m3 += p[k] * d * d * d;
        m4 += p[k] * d * d * d * d;
    }
    const double spread = std::sqrt(m2);
    const double skewness = spread > 0.0 ? m3 / (spread * spread * spread) : 0.0;
    const double kurtosis = m2 > 0.0 ? m4 / (m2 * m2) : 0.0;

    const double flatness = [&] {
        double lg = 0.0, am = 0.0;
        for (std::size_t k = 0; k < n_bins; ++k) {
            lg += std::log(p[k] + 1e-12);
            am += p[k];
        }
        return std::exp(lg / static_cast<double>(n_bins)) / (am / static_cast<double>(n_bins) + 1e-12);
    }();
    const double crest = [&] {
        double mx = 0.0, mean = 0.0;
        for (std::size_t k = 0; k < n_bins; ++k) {
            mx = std::max(mx, p[k]);
            mean += p[k];
        }
        mean /= static_cast<double>(n_bins);
        return mean > 0.0 ? mx / mean : 0.0;
    }();
    const double rolloff = [&] {
        double etot = 0.0;
        for (double v : p) etot += v * v;
        double acc = 0.0;
        for (std::size_t k = 0; k < n_bins; ++k) {
            acc += p[k] * p[k];
            if (acc >= 0.85 * etot) return k * bin_hz;
        }
        return (n_bins - 1) * bin_hz;
    }();
    const double decrease = [&] {
        double num = 0.0, den = 0.0;
        for (std::size_t k = 2; k < n_bins; ++k) {
            num += (p[k] - p[1]) / static_cast<double>(k - 1);
            den += p[k];
        }
        return den > 0.0 ? num / den : 0.0;
    }();

    // per-frame L1-normalized spectra for flux; exactly-silent frames skipped
    const double flux = [&] {
        std::vector<std::vector<double>> q;
        for (const auto& m : mags) {
            double s = 0.0;
            for (double v : m) s += v;
            if (s == 0.0) continue;
            std::vector<double> row(n_bins);
            for (std::size_t k = 0; k < n_bins; ++k) row[k] = m[k] / s;
            q.push_back(std::move(row));
        }
        if (q.size() < 2) return 0.0;
        double acc = 0.0;
        for (std::size_t f = 1; f < q.size(); ++f) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < n_bins; ++k) {
                const double d = q[f][k] - q[f - 1][k];
                d2 += d * d;
            }
            acc += std::sqrt(d2);
        }
        return acc / static_cast<double>(q.size() - 1);
    }();

    const double zcr = [&] {
        std::size_t crossings = 0;
        for (std::size_t i = 1; i < audio.samples.size(); ++i) {
            const bool a = audio.samples[i - 1] >= 0.0, b = audio.samples[i] >= 0.0;
            if (a != b) ++crossings;
        }
        return static_cast<double>(crossings) / audio.duration();
    }();

    // normalized frame-energy envelope
    std::vector<double> env;
    for (const auto& m : mags) {
        double e = 0.0;
        for (double v : m) e += v * v;
        env.push_back(std::sqrt(e));
    }
    double emax = 0.0;
    for (double v : env) emax = std::max(emax, v);
    if (emax > 0.0)
        for (double& v : env) v /= emax;
    const double hop_s = static_cast<double>(params.hop) / sr;

    const double log_attack = [&] {
        std::size_t i90 = 0;
        while (i90 < env.size() && env[i90] < 0.9) ++i90;
        std::size_t i10 = 0;
        while (i10 < i90 && env[i10] < 0.1) ++i10;
        const double attack =
            std::max(static_cast<double>(i90 - i10) * hop_s, hop_s);  // floor: one hop
        return std::log10(attack);
    }();
    const double temporal_centroid = [&] {
        double num = 0.0, den = 0.0;
        for (std::size_t f = 0; f < env.size(); ++f) {
            num += static_cast<double>(f) * hop_s * env[f];
            den += env[f];
        }
        return den > 0.0 ? num / den : 0.0;
    }();

    DescriptorVector d;
    d << centroid, spread, skewness, kurtosis, flatness, crest, rolloff, flux, zcr, log_attack,
        temporal_centroid, decrease;
    return d;
}

struct DescriptorNormalizer {
    DescriptorVector mean = DescriptorVector::Zero();
    DescriptorVector std = DescriptorVector::Ones();
    int zero_variance_dims = 0;  // std replaced by 1 for these

    DescriptorVector apply(const DescriptorVector& v) const {
        return (v - mean).cwiseQuotient(std);
    }
};

// Per-dimension zero-mean unit-variance stats (population variance).
inline DescriptorNormalizer fit_descriptor_normalizer(const std::vector<DescriptorVector>& vs) {
    if (vs.size() < 2) throw std::invalid_argument("need at least 2 vectors to fit");
    DescriptorNormalizer n;
    for (const auto& v : vs) n.mean += v;
    n.mean /= static_cast<double>(vs.size());
    DescriptorVector var = DescriptorVector::Zero();
    for (const auto& v : vs) var += (v - n.mean).cwiseAbs2();
    var /= static_cast<double>(vs.size());
    for (int i = 0; i < kNumDescriptors; ++i) {
        if (var(i) <= 0.0) {
            n.std(i) = 1.0;
            ++n.zero_variance_dims;
        } else {
            n.std(i) = std::sqrt(var(i));
        }
    }
    return n;
}

}  // namespace timbre
