#pragma once

#include <functional>
#include <string>
#include <vector>

#include "paracycle/chain.hpp"

namespace paracycle::signals {

// exp(-mean(token_logprobs)). Entries must be <= 0 (natural-log scale) and
// the list nonempty; the result is >= 1.
double conditional_perplexity(const std::vector<double>& token_logprobs);

// Scores a continuation against an instruction-wrapped context, returning
// one natural-log probability per continuation token.
using ContinuationScorer =
    std::function<std::vector<double>(const std::string& context, const std::string& continuation)>;

// Wraps a source text into the task instruction the chain was generated
// with (the same wrapping serves both directions).
using PromptWrapper = std::function<std::string(const std::string& source_text)>;

struct PerplexitySeries {
    std::vector<std::pair<int, double>> forward;  // (i, sigma_i) for i = 1..M
    std::vector<std::pair<int, double>> reverse;  // (i, sigma_hat_i) for i = 1..M-1
    double alpha_estimate = 0.0;                  // mean of the last 3 forward values
};

// Forward sigma_i scores T_i as a continuation of the task prompt applied to
// T_{i-1}; reverse sigma_hat_i scores T_i against the prompt applied to
// T_{i+1}. Scorer failures are rethrown with the step index attached.
PerplexitySeries perplexity_series(const Chain& chain, const ContinuationScorer& scorer,
                                   const PromptWrapper& wrap);

// Forward-only series read from the token logprobs recorded at generation
// time (the selected candidate of each step). Steps without logprobs raise
// DomainError naming the step.
PerplexitySeries stored_forward_perplexity_series(const Chain& chain);

// Vendi score over a set of embeddings: cosine-kernel Gram matrix K with
// unit diagonal, eigenvalues of K/n, exp of the eigenvalue entropy.
// Eigenvalues below 1e-10 are clamped to zero. Result lies in [1, n].
double vendi_score(const std::vector<std::vector<double>>& embeddings);

using Embedder = std::function<std::vector<std::vector<double>>(const std::vector<std::string>& texts)>;

struct DiversitySeries {
    std::vector<std::pair<int, double>> per_step;  // (i, vendi over step i's beam)
};

// Per-step Vendi score over each step's candidate texts, embedded on the
// fly. Steps >= 1 without candidates raise DomainError naming the step.
DiversitySeries diversity_series(const Chain& chain, const Embedder& embed);

// Population standard deviation of per-text perplexity for each snapshot.
std::vector<double> corpus_perplexity_std_series(
    const std::vector<std::vector<std::string>>& snapshots,
    const std::function<double(const std::string&)>& perplexity_of);

// Population std helper shared with the synthetic simulator.
double population_std(const std::vector<double>& values);

// Eigenvalues of a symmetric matrix via cyclic Jacobi rotations, ascending.
// Exposed for tests; vendi_score is the intended entry point.
std::vector<double> symmetric_eigenvalues(std::vector<std::vector<double>> m);

}  // namespace paracycle::signals
