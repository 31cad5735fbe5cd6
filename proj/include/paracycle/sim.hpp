#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace paracycle::sim {

// Finite metric space of N unit vectors with d(x,y) = (1 - cosine(x,y))/2,
// bounded to [0,1] like normalized edit distance. Each state carries an
// intrinsic perplexity in [1, 10] for the homogenization experiments.
struct SyntheticSpace {
    int n_states = 0;
    int dim = 0;
    std::vector<std::vector<double>> points;
    std::vector<double> intrinsic_ppl;
    std::vector<std::vector<double>> dist;

    double distance(int a, int b) const { return dist[static_cast<std::size_t>(a)]
                                                     [static_cast<std::size_t>(b)]; }
};

// Deterministic for (n_states, dim, seed). DomainError on n_states < 3 or
// dim < 2.
SyntheticSpace build_space(int n_states, int dim, std::uint64_t seed);

// Stochastic self-reinforcing operator: logit(t') = beta_logit * affinity +
// lambda * weights, softmax over the states at distance >= delta_min from
// the current state (and from the previous state in history mode).
struct OperatorConfig {
    double beta_logit = 4.0;  // softmax sharpness, > 0
    double lambda = 1.0;      // reinforcement gain on accumulated weights, >= 0
    double eta = 0.5;         // per-transition weight increment, >= 0
    double delta_min = 0.0;   // forbidden radius around anchor states, >= 0
    bool history_mode = false;
    std::vector<std::vector<double>> base_affinity;  // N x N, symmetric
    std::uint64_t seed = 0;

    void validate(int n_states) const;
};

// Affinity constructors (symmetric, zero diagonal).
std::vector<std::vector<double>> random_affinity(int n_states, std::uint64_t seed);
// Strong within consecutive pairs (0,1), (2,3), ...; weak elsewhere.
std::vector<std::vector<double>> pair_affinity(int n_states, double strong, double weak);
// Strong within the given clique; weak elsewhere.
std::vector<std::vector<double>> clique_affinity(int n_states, const std::vector<int>& members,
                                                 double strong, double weak);
// aff(a,b) = -strength * (ppl_a + ppl_b)/2: from any state the softmax
// favors low-intrinsic-perplexity targets while staying symmetric.
std::vector<std::vector<double>> ppl_biased_affinity(const SyntheticSpace& space, double strength);

using WeightMatrix = std::vector<std::vector<double>>;

WeightMatrix zero_weights(int n_states);

// Probability vector over all N states; forbidden states get exactly 0.
// prev is required iff history_mode. DomainError "empty support" when every
// state is forbidden.
std::vector<double> transition_distribution(const SyntheticSpace& space,
                                            const OperatorConfig& config,
                                            const WeightMatrix& weights, int current,
                                            std::optional<int> prev);

// states s_0..s_M plus the exact per-step perplexities, computed from the
// operator state in force at that step, before that step's weight update:
//   sigma[i-1]     = 1 / p(s_i | s_{i-1})
//   sigma_hat[i-1] = 1 / p(s_{i-1} | s_i)
// The reverse probability uses the one-step kernel anchored only at s_i;
// a history-conditioned reverse would assign s_{i-1} probability 0 by
// construction. The first forward transition in history mode anchors both
// slots at s_0.
struct SimChain {
    std::vector<int> states;
    std::vector<double> sigma;
    std::vector<double> sigma_hat;
};

// M >= 2. Sampling is driven by config.seed; identical inputs give
// identical chains on every platform.
SimChain simulate_chain(const SyntheticSpace& space, const OperatorConfig& config, int s0, int M);

// k-periodicity of a state chain under the space metric:
// tau_k = 1 - mean_{i=k+1..M} d(s_i, s_{i-k}). DomainError when M < k + 1.
double sim_periodicity(const SyntheticSpace& space, const std::vector<int>& states, int k);

// Least-squares slope k of omega = 1 - k * sigma with the intercept fixed
// at 1: k = sum(sigma*(1-omega)) / sum(sigma^2). DomainError on fewer than
// 2 samples or constant sigma.
double fit_similarity_slope(const std::vector<std::pair<double, double>>& samples);

// Parameters of the similarity lower bound, all on the rescaled perplexity
// axis sigma' = 1 - 1/sigma in [0, 1).
struct BoundParams {
    double alpha = 0.0;    // limit forward conditional perplexity
    double beta = 0.0;     // reverse perplexity bound, >= alpha
    double theta = 0.0;    // slack, > 0
    double k_slope = 0.0;  // similarity-perplexity slope, > 0
    double epsilon = 0.0;  // perplexity band half-width, >= 0

    void validate() const;
};

struct BoundReport {
    double lhs = 0.0;  // E[Omega(s_{i-1}, s_{i+1})], Omega = 1 - d
    double rhs = 0.0;  // (1 - k*alpha) * (1 - (beta - alpha)/theta)
    bool holds = false;
    bool assumptions_met = false;  // beta - alpha < theta and band_mass >= 0.9
    double band_mass = 0.0;        // P(|sigma' - alpha| <= epsilon) on the last transition
    int step_index = 0;
    std::string initial_distribution;  // "uniform" or "custom"
};

std::string bound_report_to_json(const BoundReport& report);

// Exact enumeration of every path s_0..s_{i+1} with the reinforcement
// replayed along each prefix. step_index >= 2; guarded to n_states <= 64
// and step_index + 1 <= 12 ("enumeration too large"). s0_dist defaults to
// uniform; when given it must have one nonnegative entry per state and sum
// to 1 (within 1e-9).
BoundReport verify_bound(const SyntheticSpace& space, const OperatorConfig& config, int step_index,
                         const BoundParams& params,
                         const std::optional<std::vector<double>>& s0_dist = std::nullopt);

// Corpus dynamics: per step, paraphrase_per_step random entries are replaced
// by one operator application each and add_per_step fresh uniform states are
// appended. snapshots[t] is the corpus after t steps; std_series[t] is the
// population std of intrinsic_ppl over a seeded sample of
// min(1000, corpus size) entries of snapshots[t].
struct HomogenizationResult {
    std::vector<std::vector<int>> snapshots;
    std::vector<double> std_series;
};

// corpus_size >= paraphrase_per_step and >= 1; counts nonnegative.
// initial_corpus (when given) overrides the uniform seeded initial corpus
// and must have corpus_size entries.
HomogenizationResult homogenization_sim(const SyntheticSpace& space, const OperatorConfig& config,
                                        int corpus_size, int paraphrase_per_step, int add_per_step,
                                        int steps, std::uint64_t seed,
                                        const std::optional<std::vector<int>>& initial_corpus =
                                            std::nullopt);

}  // namespace paracycle::sim
