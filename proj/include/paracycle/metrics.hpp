#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "paracycle/chain.hpp"

namespace paracycle::metrics {

enum class Granularity { character, word };

std::string to_string(Granularity g);
Granularity granularity_from_string(const std::string& s);

// Comparison units for a text: Unicode scalar values at character
// granularity, whitespace tokens at word granularity. Chinese has no
// whitespace segmentation, so word granularity falls back to per-character
// units for Language::zh. Units are hashes, equality-comparable only.
std::vector<std::uint64_t> split_units(std::string_view text, Granularity g,
                                       Language language = Language::en);

// Raw Levenshtein distance between unit sequences.
std::size_t levenshtein(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b);

// Levenshtein over units divided by max(|a|, |b|); 0 when both are empty.
// Symmetric, in [0,1], d(x,x) = 0, d("", y) = 1 for nonempty y. Texts are
// compared verbatim (no case folding, no whitespace collapsing).
double normalized_edit_distance(std::string_view a, std::string_view b, Granularity g,
                                Language language = Language::en);

// (M+1) x (M+1) symmetric matrix of pairwise normalized edit distances over
// a chain, including row/column 0 for the original text.
struct DifferenceMatrix {
    int size = 0;
    std::vector<std::vector<double>> values;
    Granularity granularity = Granularity::character;

    // CSV with a header row/column of step indices, 6 decimal places.
    std::string to_csv() const;
};

DifferenceMatrix difference_matrix(const Chain& chain, Granularity g);

// tau_k = 1 - mean over i = k+1..M of d(T_i, T_{i-k}); per_pair keeps the
// individual lag distances. k = 2 gives the 2-periodicity degree.
struct PeriodicityReport {
    int k = 0;
    double tau = 0.0;
    std::vector<std::pair<int, double>> per_pair;
    Granularity granularity = Granularity::character;
};

// Requires M >= k+1 so at least one compared pair lies entirely among
// transformed steps; throws DomainError("chain too short for period k").
PeriodicityReport periodicity_degree(const Chain& chain, int k, Granularity g);

// The per-pair list of periodicity_degree, for trend plots.
std::vector<std::pair<int, double>> lag_distance_series(const Chain& chain, int k, Granularity g);

// Throws DomainError on dimension mismatch or zero vector.
double cosine_similarity(const std::vector<double>& u, const std::vector<double>& v);

// (i, cos(embedding(T_i), embedding(T_0))) for i = 1..M. Every step must
// carry an embedding; the error names the first step that lacks one.
std::vector<std::pair<int, double>> similarity_to_origin_series(const Chain& chain);

}  // namespace paracycle::metrics
