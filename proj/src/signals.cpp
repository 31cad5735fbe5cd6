#include "paracycle/signals.hpp"

#include <algorithm>
#include <cmath>

#include "paracycle/errors.hpp"
#include "paracycle/metrics.hpp"

namespace paracycle::signals {

double conditional_perplexity(const std::vector<double>& token_logprobs) {
    if (token_logprobs.empty()) throw DomainError("conditional_perplexity: empty logprob list");
    double sum = 0.0;
    for (double lp : token_logprobs) {
        if (lp > 0.0) throw DomainError("conditional_perplexity: positive log-probability");
        sum += lp;
    }
    return std::exp(-sum / static_cast<double>(token_logprobs.size()));
}

static double mean_of_tail(const std::vector<std::pair<int, double>>& series, std::size_t n) {
    if (series.empty()) return 0.0;
    const std::size_t take = std::min(n, series.size());
    double sum = 0.0;
    for (std::size_t i = series.size() - take; i < series.size(); ++i) sum += series[i].second;
    return sum / static_cast<double>(take);
}

PerplexitySeries perplexity_series(const Chain& chain, const ContinuationScorer& scorer,
                                   const PromptWrapper& wrap) {
    const int m = chain.rounds();
    if (m < 1) throw DomainError("perplexity_series: chain has no transformation steps");

    PerplexitySeries out;
    const auto text_at = [&](int i) -> const std::string& {
        return chain.steps[static_cast<std::size_t>(i)].text;
    };
    const auto score = [&](int i, const std::string& context) {
        try {
            return scorer(wrap(context), text_at(i));
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw BackendError("perplexity_series: scorer failed at step " + std::to_string(i) + ": " +
                               e.what());
        }
    };
    for (int i = 1; i <= m; ++i)
        out.forward.emplace_back(i, conditional_perplexity(score(i, text_at(i - 1))));
    for (int i = 1; i <= m - 1; ++i)
        out.reverse.emplace_back(i, conditional_perplexity(score(i, text_at(i + 1))));
    out.alpha_estimate = mean_of_tail(out.forward, 3);
    return out;
}

PerplexitySeries stored_forward_perplexity_series(const Chain& chain) {
    PerplexitySeries out;
    for (const auto& s : chain.steps) {
        if (s.step == 0) continue;
        if (!s.selected_index || static_cast<std::size_t>(*s.selected_index) >= s.candidates.size())
            throw DomainError("stored perplexity: step " + std::to_string(s.step) + " has no selection");
        const auto& cand = s.candidates[static_cast<std::size_t>(*s.selected_index)];
        if (!cand.token_logprobs)
            throw DomainError("stored perplexity: step " + std::to_string(s.step) +
                              " has no token logprobs");
        out.forward.emplace_back(s.step, conditional_perplexity(*cand.token_logprobs));
    }
    out.alpha_estimate = mean_of_tail(out.forward, 3);
    return out;
}

std::vector<double> symmetric_eigenvalues(std::vector<std::vector<double>> a) {
    const std::size_t n = a.size();
    for (std::size_t sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::fabs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
    std::sort(ev.begin(), ev.end());
    return ev;
}

double vendi_score(const std::vector<std::vector<double>>& embeddings) {
    const std::size_t n = embeddings.size();
    if (n == 0) throw DomainError("vendi_score: empty embedding set");
    std::vector<std::vector<double>> k(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        k[i][i] = 1.0 / static_cast<double>(n);  // unit diagonal of K, scaled by 1/n
        for (std::size_t j = i + 1; j < n; ++j) {
            const double c = metrics::cosine_similarity(embeddings[i], embeddings[j]);
            k[i][j] = c / static_cast<double>(n);
            k[j][i] = k[i][j];
        }
    }
    const auto ev = symmetric_eigenvalues(std::move(k));
    double entropy = 0.0;
    for (double lambda : ev) {
        if (lambda < 1e-10) continue;  // clamp numerical noise to zero
        entropy -= lambda * std::log(lambda);
    }
    return std::exp(entropy);
}

DiversitySeries diversity_series(const Chain& chain, const Embedder& embed) {
    DiversitySeries out;
    for (const auto& s : chain.steps) {
        if (s.step == 0) continue;
        if (s.candidates.empty())
            throw DomainError("diversity_series: step " + std::to_string(s.step) + " has no beam");
        std::vector<std::string> texts;
        texts.reserve(s.candidates.size());
        for (const auto& c : s.candidates) texts.push_back(c.text);
        out.per_step.emplace_back(s.step, vendi_score(embed(texts)));
    }
    return out;
}

double population_std(const std::vector<double>& values) {
    if (values.empty()) throw DomainError("population_std: empty sample");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    return std::sqrt(var / static_cast<double>(values.size()));
}

std::vector<double> corpus_perplexity_std_series(
    const std::vector<std::vector<std::string>>& snapshots,
    const std::function<double(const std::string&)>& perplexity_of) {
    std::vector<double> out;
    for (std::size_t s = 0; s < snapshots.size(); ++s) {
        if (snapshots[s].empty())
            throw DomainError("corpus_perplexity_std_series: snapshot " + std::to_string(s) + " is empty");
        std::vector<double> ppl;
        ppl.reserve(snapshots[s].size());
        for (const auto& t : snapshots[s]) ppl.push_back(perplexity_of(t));
        out.push_back(population_std(ppl));
    }
    return out;
}

}  // namespace paracycle::signals
