#include "paracycle/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "paracycle/errors.hpp"
#include "paracycle/io.hpp"
#include "paracycle/text.hpp"

namespace paracycle::metrics {

std::string to_string(Granularity g) {
    return g == Granularity::character ? "char" : "word";
}

Granularity granularity_from_string(const std::string& s) {
    if (s == "char") return Granularity::character;
    if (s == "word") return Granularity::word;
    throw FormatError("unknown granularity: " + s);
}

// FNV-1a, for word tokens.
static std::uint64_t hash_bytes(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::vector<std::uint64_t> split_units(std::string_view t, Granularity g, Language language) {
    std::vector<std::uint64_t> units;
    if (g == Granularity::character || language == Language::zh) {
        for (char32_t cp : text::decode_utf8(t)) units.push_back(static_cast<std::uint64_t>(cp));
    } else {
        for (const auto& w : text::split_words(t)) units.push_back(hash_bytes(w));
    }
    return units;
}

std::size_t levenshtein(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
    const std::size_t n = a.size(), m = b.size();
    if (n == 0) return m;
    if (m == 0) return n;
    std::vector<std::size_t> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double normalized_edit_distance(std::string_view a, std::string_view b, Granularity g,
                                Language language) {
    const auto ua = split_units(a, g, language);
    const auto ub = split_units(b, g, language);
    const std::size_t denom = std::max(ua.size(), ub.size());
    if (denom == 0) return 0.0;
    return static_cast<double>(levenshtein(ua, ub)) / static_cast<double>(denom);
}

std::string DifferenceMatrix::to_csv() const {
    std::string out = "step";
    for (int j = 0; j < size; ++j) out += "," + std::to_string(j);
    out += '\n';
    for (int i = 0; i < size; ++i) {
        out += std::to_string(i);
        for (int j = 0; j < size; ++j) {
            out += ',';
            out += io::format_fixed6(values[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
        }
        out += '\n';
    }
    return out;
}

DifferenceMatrix difference_matrix(const Chain& chain, Granularity g) {
    auto violations = validate_chain(chain);
    if (!violations.empty()) throw ValidationError("difference_matrix: " + violations.front());

    const std::size_t n = chain.steps.size();
    std::vector<std::vector<std::uint64_t>> units;
    units.reserve(n);
    for (const auto& s : chain.steps) units.push_back(split_units(s.text, g, chain.language));

    DifferenceMatrix dm;
    dm.size = static_cast<int>(n);
    dm.granularity = g;
    dm.values.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const std::size_t denom = std::max(units[i].size(), units[j].size());
            const double d =
                denom == 0 ? 0.0
                           : static_cast<double>(levenshtein(units[i], units[j])) / static_cast<double>(denom);
            dm.values[i][j] = d;
            dm.values[j][i] = d;
        }
    }
    return dm;
}

PeriodicityReport periodicity_degree(const Chain& chain, int k, Granularity g) {
    if (k < 1) throw DomainError("periodicity_degree: k must be >= 1");
    const int m = chain.rounds();
    if (m < k + 1)
        throw DomainError("chain too short for period " + std::to_string(k) + " (M=" + std::to_string(m) + ")");

    PeriodicityReport report;
    report.k = k;
    report.granularity = g;
    double sum = 0.0;
    for (int i = k + 1; i <= m; ++i) {
        const double d = normalized_edit_distance(chain.steps[static_cast<std::size_t>(i)].text,
                                                  chain.steps[static_cast<std::size_t>(i - k)].text, g,
                                                  chain.language);
        report.per_pair.emplace_back(i, d);
        sum += d;
    }
    report.tau = 1.0 - sum / static_cast<double>(m - k);
    return report;
}

std::vector<std::pair<int, double>> lag_distance_series(const Chain& chain, int k, Granularity g) {
    return periodicity_degree(chain, k, g).per_pair;
}

double cosine_similarity(const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() != v.size())
        throw DomainError("cosine_similarity: dimension mismatch (" + std::to_string(u.size()) + " vs " +
                          std::to_string(v.size()) + ")");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) throw DomainError("cosine_similarity: zero vector");
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

std::vector<std::pair<int, double>> similarity_to_origin_series(const Chain& chain) {
    if (chain.steps.empty()) throw DomainError("similarity_to_origin_series: empty chain");
    for (const auto& s : chain.steps) {
        if (!s.embedding)
            throw DomainError("similarity_to_origin_series: step " + std::to_string(s.step) +
                              " has no embedding");
    }
    std::vector<std::pair<int, double>> out;
    const auto& origin = *chain.steps[0].embedding;
    for (std::size_t i = 1; i < chain.steps.size(); ++i) {
        out.emplace_back(chain.steps[i].step, cosine_similarity(*chain.steps[i].embedding, origin));
    }
    return out;
}

}  // namespace paracycle::metrics
