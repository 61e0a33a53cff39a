#pragma once

#include <cstdint>
#include <random>

namespace timbre {

// splitmix64 finalizer; good avalanche for key mixing.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
    return mix64(seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

// Counter-based stream: a fresh engine keyed by (seed, stream indices).
// Independent (batch, item) streams can be drawn in any order or in
// parallel and still reproduce bit-identical results.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}
    Rng(std::uint64_t seed, std::uint64_t k1) : engine_(hash_combine(mix64(seed), k1)) {}
    Rng(std::uint64_t seed, std::uint64_t k1, std::uint64_t k2)
        : engine_(hash_combine(hash_combine(mix64(seed), k1), k2)) {}
    Rng(std::uint64_t seed, std::uint64_t k1, std::uint64_t k2, std::uint64_t k3)
        : engine_(hash_combine(hash_combine(hash_combine(mix64(seed), k1), k2), k3)) {}

    std::mt19937_64& engine() { return engine_; }

    double uniform(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(engine_);
    }
    int uniform_int(int lo, int hi) {  // inclusive
        std::uniform_int_distribution<int> d(lo, hi);
        return d(engine_);
    }
    double normal(double mean, double std) {
        std::normal_distribution<double> d(mean, std);
        return d(engine_);
    }
    double exponential(double rate) {
        std::exponential_distribution<double> d(rate);
        return d(engine_);
    }
    bool bernoulli(double p) {
        std::bernoulli_distribution d(p);
        return d(engine_);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace timbre
