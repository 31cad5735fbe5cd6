#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "paracycle/errors.hpp"

// Seeded randomness helpers. Everything here is deterministic across
// platforms: mt19937_64 output is fixed by the standard, and all draws are
// derived from raw engine words rather than std::*_distribution (whose
// algorithms are implementation-defined).

namespace paracycle::rng {

using Engine = std::mt19937_64;

// splitmix64; used to derive independent stream seeds from a base seed.
inline std::uint64_t split_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline Engine make_engine(std::uint64_t seed) { return Engine(seed); }

// Uniform double in [0, 1) with 53 random bits.
inline double unit_double(Engine& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Uniform index in [0, n). Modulo bias is ~n/2^64, irrelevant at our scales.
inline std::size_t pick_index(Engine& eng, std::size_t n) {
    if (n == 0) throw DomainError("pick_index: empty range");
    return static_cast<std::size_t>(eng() % n);
}

// Standard normal via Box-Muller (portable, unlike std::normal_distribution).
inline double gaussian(Engine& eng) {
    double u1 = unit_double(eng);
    double u2 = unit_double(eng);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Sample an index from a probability vector (inverse CDF walk).
inline std::size_t sample_discrete(Engine& eng, const std::vector<double>& probs) {
    double u = unit_double(eng);
    double acc = 0.0;
    std::size_t last_positive = probs.size();
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        last_positive = i;
        acc += probs[i];
        if (u < acc) return i;
    }
    if (last_positive == probs.size()) throw DomainError("sample_discrete: no positive mass");
    return last_positive;  // u landed in rounding slack at the top
}

// k distinct indices from [0, n), in draw order (partial Fisher-Yates).
inline std::vector<std::size_t> sample_without_replacement(Engine& eng, std::size_t n, std::size_t k) {
    if (k > n) throw DomainError("sample_without_replacement: k > n");
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + pick_index(eng, n - i);
        std::swap(pool[i], pool[j]);
        out.push_back(pool[i]);
    }
    return out;
}

}  // namespace paracycle::rng
