#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <utility>

#include <nlohmann/json.hpp>

#include "paracycle/errors.hpp"
#include "paracycle/rng.hpp"
#include "paracycle/signals.hpp"
#include "paracycle/sim.hpp"

namespace paracycle::sim {

namespace {

void check_state(const SyntheticSpace& space, int s, const char* name) {
    if (s < 0 || s >= space.n_states)
        throw DomainError(std::string(name) + " out of range: " + std::to_string(s));
}

// Transition kernel from `from`, with every state inside the delta_min ball
// of any anchor forbidden. Writes a full N-vector; forbidden entries are
// exactly 0. anchors has one entry (the current state) or two (current and
// previous, history mode).
void kernel_into(std::vector<double>& out, const SyntheticSpace& space,
                 const OperatorConfig& config, const WeightMatrix& weights, int from,
                 const int* anchors, int n_anchors) {
    std::size_t n = static_cast<std::size_t>(space.n_states);
    out.assign(n, 0.0);
    const auto& aff = config.base_affinity[static_cast<std::size_t>(from)];
    const auto& w = weights[static_cast<std::size_t>(from)];
    auto forbidden = [&](std::size_t t) {
        for (int a = 0; a < n_anchors; ++a)
            if (space.dist[static_cast<std::size_t>(anchors[a])][t] < config.delta_min) return true;
        return false;
    };
    double max_logit = 0.0;
    bool any = false;
    for (std::size_t t = 0; t < n; ++t) {
        if (forbidden(t)) continue;
        double logit = config.beta_logit * aff[t] + config.lambda * w[t];
        out[t] = logit;
        if (!any || logit > max_logit) max_logit = logit;
        any = true;
    }
    if (!any) throw DomainError("empty support: every state is within delta_min of an anchor");
    double z = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        if (forbidden(t)) {
            out[t] = 0.0;
            continue;
        }
        out[t] = std::exp(out[t] - max_logit);
        z += out[t];
    }
    for (double& p : out) p /= z;
}

}  // namespace

SyntheticSpace build_space(int n_states, int dim, std::uint64_t seed) {
    if (n_states < 3) throw DomainError("build_space requires at least 3 states");
    if (dim < 2) throw DomainError("build_space requires dimension >= 2");
    SyntheticSpace space;
    space.n_states = n_states;
    space.dim = dim;
    rng::Engine eng(seed);
    std::size_t n = static_cast<std::size_t>(n_states);
    space.points.resize(n);
    for (auto& p : space.points) {
        double norm = 0.0;
        do {
            p.resize(static_cast<std::size_t>(dim));
            norm = 0.0;
            for (double& x : p) {
                x = rng::gaussian(eng);
                norm += x * x;
            }
        } while (norm < 1e-24);
        norm = std::sqrt(norm);
        for (double& x : p) x /= norm;
    }
    space.intrinsic_ppl.resize(n);
    for (double& v : space.intrinsic_ppl) v = 1.0 + 9.0 * rng::unit_double(eng);
    space.dist.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) {
            double dot = 0.0;
            for (std::size_t k = 0; k < static_cast<std::size_t>(dim); ++k)
                dot += space.points[a][k] * space.points[b][k];
            double d = std::clamp((1.0 - dot) / 2.0, 0.0, 1.0);
            space.dist[a][b] = d;
            space.dist[b][a] = d;
        }
    return space;
}

void OperatorConfig::validate(int n_states) const {
    if (!(beta_logit > 0.0)) throw ValidationError("beta_logit must be > 0");
    if (lambda < 0.0) throw ValidationError("lambda must be >= 0");
    if (eta < 0.0) throw ValidationError("eta must be >= 0");
    if (delta_min < 0.0) throw ValidationError("delta_min must be >= 0");
    std::size_t n = static_cast<std::size_t>(n_states);
    if (base_affinity.size() != n) throw ValidationError("base_affinity must be N x N");
    for (std::size_t a = 0; a < n; ++a) {
        if (base_affinity[a].size() != n) throw ValidationError("base_affinity must be N x N");
        for (std::size_t b = a + 1; b < n; ++b)
            if (std::abs(base_affinity[a][b] - base_affinity[b][a]) > 1e-12)
                throw ValidationError("base_affinity must be symmetric");
    }
}

std::vector<std::vector<double>> random_affinity(int n_states, std::uint64_t seed) {
    std::size_t n = static_cast<std::size_t>(n_states);
    rng::Engine eng(seed);
    std::vector<std::vector<double>> aff(n, std::vector<double>(n, 0.0));
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) {
            double v = rng::unit_double(eng);
            aff[a][b] = v;
            aff[b][a] = v;
        }
    return aff;
}

std::vector<std::vector<double>> pair_affinity(int n_states, double strong, double weak) {
    std::size_t n = static_cast<std::size_t>(n_states);
    std::vector<std::vector<double>> aff(n, std::vector<double>(n, weak));
    for (std::size_t a = 0; a < n; ++a) aff[a][a] = 0.0;
    for (std::size_t a = 0; a + 1 < n; a += 2) {
        aff[a][a + 1] = strong;
        aff[a + 1][a] = strong;
    }
    return aff;
}

std::vector<std::vector<double>> clique_affinity(int n_states, const std::vector<int>& members,
                                                 double strong, double weak) {
    std::size_t n = static_cast<std::size_t>(n_states);
    std::vector<std::vector<double>> aff(n, std::vector<double>(n, weak));
    for (std::size_t a = 0; a < n; ++a) aff[a][a] = 0.0;
    for (int a : members)
        for (int b : members) {
            if (a == b) continue;
            if (a < 0 || a >= n_states || b < 0 || b >= n_states)
                throw DomainError("clique member out of range");
            aff[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = strong;
        }
    return aff;
}

std::vector<std::vector<double>> ppl_biased_affinity(const SyntheticSpace& space, double strength) {
    std::size_t n = static_cast<std::size_t>(space.n_states);
    std::vector<std::vector<double>> aff(n, std::vector<double>(n, 0.0));
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
            if (a == b) continue;
            aff[a][b] = -strength * (space.intrinsic_ppl[a] + space.intrinsic_ppl[b]) / 2.0;
        }
    return aff;
}

WeightMatrix zero_weights(int n_states) {
    std::size_t n = static_cast<std::size_t>(n_states);
    return WeightMatrix(n, std::vector<double>(n, 0.0));
}

std::vector<double> transition_distribution(const SyntheticSpace& space,
                                            const OperatorConfig& config,
                                            const WeightMatrix& weights, int current,
                                            std::optional<int> prev) {
    config.validate(space.n_states);
    check_state(space, current, "current state");
    if (config.history_mode && !prev.has_value())
        throw DomainError("history_mode requires a previous state");
    if (!config.history_mode && prev.has_value())
        throw DomainError("previous state supplied without history_mode");
    int anchors[2] = {current, current};
    int n_anchors = 1;
    if (prev.has_value()) {
        check_state(space, *prev, "previous state");
        anchors[1] = *prev;
        n_anchors = 2;
    }
    std::vector<double> out;
    kernel_into(out, space, config, weights, current, anchors, n_anchors);
    return out;
}

SimChain simulate_chain(const SyntheticSpace& space, const OperatorConfig& config, int s0, int M) {
    if (M < 2) throw DomainError("simulate_chain requires M >= 2");
    config.validate(space.n_states);
    check_state(space, s0, "initial state");

    SimChain chain;
    chain.states.push_back(s0);
    WeightMatrix weights = zero_weights(space.n_states);
    rng::Engine eng(config.seed);
    int cur = s0;
    int prev = s0;  // first history transition anchors both slots at s_0
    std::vector<double> p, p_rev;
    for (int i = 1; i <= M; ++i) {
        int anchors[2] = {cur, prev};
        kernel_into(p, space, config, weights, cur, anchors, config.history_mode ? 2 : 1);
        int next = static_cast<int>(rng::sample_discrete(eng, p));
        chain.sigma.push_back(1.0 / p[static_cast<std::size_t>(next)]);

        // reverse probability of the step just taken, one-step kernel from s_i
        int rev_anchor = next;
        kernel_into(p_rev, space, config, weights, next, &rev_anchor, 1);
        chain.sigma_hat.push_back(1.0 / p_rev[static_cast<std::size_t>(cur)]);

        std::size_t uc = static_cast<std::size_t>(cur), un = static_cast<std::size_t>(next);
        weights[uc][un] += config.eta;
        weights[un][uc] += config.eta;

        chain.states.push_back(next);
        prev = cur;
        cur = next;
    }
    return chain;
}

double sim_periodicity(const SyntheticSpace& space, const std::vector<int>& states, int k) {
    if (k < 1) throw DomainError("period k must be >= 1");
    int m = static_cast<int>(states.size()) - 1;
    if (m < k + 1)
        throw DomainError("chain too short for period " + std::to_string(k) +
                          " (M=" + std::to_string(m) + ")");
    for (int s : states) check_state(space, s, "chain state");
    double sum = 0.0;
    for (int i = k + 1; i <= m; ++i)
        sum += space.distance(states[static_cast<std::size_t>(i)],
                              states[static_cast<std::size_t>(i - k)]);
    return 1.0 - sum / static_cast<double>(m - k);
}

double fit_similarity_slope(const std::vector<std::pair<double, double>>& samples) {
    if (samples.size() < 2) throw DomainError("slope fit needs at least 2 samples");
    double lo = samples.front().first, hi = samples.front().first;
    for (const auto& [sigma, omega] : samples) {
        (void)omega;
        lo = std::min(lo, sigma);
        hi = std::max(hi, sigma);
    }
    if (lo == hi) throw DomainError("slope fit is degenerate: constant sigma");
    double num = 0.0, den = 0.0;
    for (const auto& [sigma, omega] : samples) {
        num += sigma * (1.0 - omega);
        den += sigma * sigma;
    }
    return num / den;
}

void BoundParams::validate() const {
    if (!(theta > 0.0)) throw ValidationError("theta must be > 0");
    if (!(k_slope > 0.0)) throw ValidationError("k_slope must be > 0");
    if (epsilon < 0.0) throw ValidationError("epsilon must be >= 0");
    if (beta < alpha) throw ValidationError("beta must be >= alpha");
}

std::string bound_report_to_json(const BoundReport& report) {
    nlohmann::ordered_json j;
    j["lhs"] = report.lhs;
    j["rhs"] = report.rhs;
    j["holds"] = report.holds;
    j["assumptions_met"] = report.assumptions_met;
    j["band_mass"] = report.band_mass;
    j["step_index"] = report.step_index;
    j["initial_distribution"] = report.initial_distribution;
    return j.dump(2) + "\n";
}

namespace {

// Exact expectation by depth-first path enumeration. The weight matrix is
// shared across the traversal: each transition's reinforcement is applied on
// the way down and undone on the way up, so a path's kernels always see
// exactly the reinforcement accumulated along its own prefix.
struct BoundEnumerator {
    const SyntheticSpace& space;
    const OperatorConfig& config;
    const BoundParams& params;
    int last_step;  // enumerate s_0 .. s_{last_step+1}
    WeightMatrix weights;
    std::vector<std::vector<double>> dist_by_depth;
    double lhs = 0.0;
    double band_mass = 0.0;

    BoundEnumerator(const SyntheticSpace& sp, const OperatorConfig& cfg, const BoundParams& bp,
                    int step_index)
        : space(sp), config(cfg), params(bp), last_step(step_index),
          weights(zero_weights(sp.n_states)),
          dist_by_depth(static_cast<std::size_t>(step_index) + 1) {}

    void descend(int depth, int cur, int prev, double prob) {
        auto& dist = dist_by_depth[static_cast<std::size_t>(depth)];
        int anchors[2] = {cur, prev};
        kernel_into(dist, space, config, weights, cur, anchors, config.history_mode ? 2 : 1);
        if (depth == last_step) {
            // Vectorized last transition: E over s_{i+1} given this prefix.
            for (std::size_t j = 0; j < dist.size(); ++j) {
                if (dist[j] == 0.0) continue;
                double mass = prob * dist[j];
                lhs += mass *
                       (1.0 - space.dist[static_cast<std::size_t>(prev)][j]);
                double sigma_prime = 1.0 - dist[j];
                if (std::abs(sigma_prime - params.alpha) <= params.epsilon) band_mass += mass;
            }
            return;
        }
        std::size_t uc = static_cast<std::size_t>(cur);
        for (std::size_t j = 0; j < dist.size(); ++j) {
            if (dist[j] == 0.0) continue;
            weights[uc][j] += config.eta;
            weights[j][uc] += config.eta;
            descend(depth + 1, static_cast<int>(j), cur, prob * dist[j]);
            weights[uc][j] -= config.eta;
            weights[j][uc] -= config.eta;
        }
    }
};

}  // namespace

BoundReport verify_bound(const SyntheticSpace& space, const OperatorConfig& config, int step_index,
                         const BoundParams& params,
                         const std::optional<std::vector<double>>& s0_dist) {
    params.validate();
    config.validate(space.n_states);
    if (step_index < 2) throw DomainError("verify_bound requires step_index >= 2");
    if (space.n_states > 64 || step_index + 1 > 12)
        throw DomainError("enumeration too large (guard: N <= 64, steps <= 12)");

    std::size_t n = static_cast<std::size_t>(space.n_states);
    std::vector<double> p0(n, 1.0 / static_cast<double>(space.n_states));
    if (s0_dist.has_value()) {
        if (s0_dist->size() != n)
            throw ValidationError("s0 distribution must have one entry per state");
        double sum = 0.0;
        for (double p : *s0_dist) {
            if (p < 0.0) throw ValidationError("s0 distribution entries must be >= 0");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("s0 distribution must sum to 1");
        p0 = *s0_dist;
    }

    BoundEnumerator enumerator(space, config, params, step_index);
    for (std::size_t s = 0; s < n; ++s) {
        if (p0[s] == 0.0) continue;
        // first transition in history mode anchors both slots at s_0
        enumerator.descend(0, static_cast<int>(s), static_cast<int>(s), p0[s]);
    }

    BoundReport report;
    report.lhs = enumerator.lhs;
    report.rhs = (1.0 - params.k_slope * params.alpha) *
                 (1.0 - (params.beta - params.alpha) / params.theta);
    report.holds = report.lhs > report.rhs;
    report.band_mass = enumerator.band_mass;
    report.assumptions_met =
        (params.beta - params.alpha < params.theta) && report.band_mass >= 0.9;
    report.step_index = step_index;
    report.initial_distribution = s0_dist.has_value() ? "custom" : "uniform";
    return report;
}

HomogenizationResult homogenization_sim(const SyntheticSpace& space, const OperatorConfig& config,
                                        int corpus_size, int paraphrase_per_step, int add_per_step,
                                        int steps, std::uint64_t seed,
                                        const std::optional<std::vector<int>>& initial_corpus) {
    config.validate(space.n_states);
    if (corpus_size < 1) throw DomainError("corpus_size must be >= 1");
    if (paraphrase_per_step < 0 || add_per_step < 0 || steps < 0)
        throw DomainError("homogenization counts must be >= 0");
    if (paraphrase_per_step > corpus_size)
        throw DomainError("paraphrase_per_step exceeds corpus_size");

    rng::Engine eng(rng::split_seed(seed, 0));
    const std::uint64_t sample_seed = rng::split_seed(seed, 1);

    std::vector<int> corpus;
    if (initial_corpus.has_value()) {
        if (static_cast<int>(initial_corpus->size()) != corpus_size)
            throw DomainError("initial corpus size mismatch");
        for (int s : *initial_corpus) check_state(space, s, "corpus state");
        corpus = *initial_corpus;
    } else {
        corpus.reserve(static_cast<std::size_t>(corpus_size));
        for (int i = 0; i < corpus_size; ++i)
            corpus.push_back(static_cast<int>(rng::pick_index(eng, static_cast<std::size_t>(
                                                                       space.n_states))));
    }

    HomogenizationResult result;
    result.snapshots.push_back(corpus);

    WeightMatrix weights = zero_weights(space.n_states);
    std::vector<double> p;
    for (int t = 1; t <= steps; ++t) {
        auto idxs = rng::sample_without_replacement(eng, corpus.size(),
                                                    static_cast<std::size_t>(paraphrase_per_step));
        for (std::size_t idx : idxs) {
            int s = corpus[idx];
            int anchor = s;
            kernel_into(p, space, config, weights, s, &anchor, 1);
            int nxt = static_cast<int>(rng::sample_discrete(eng, p));
            corpus[idx] = nxt;
            weights[static_cast<std::size_t>(s)][static_cast<std::size_t>(nxt)] += config.eta;
            weights[static_cast<std::size_t>(nxt)][static_cast<std::size_t>(s)] += config.eta;
        }
        for (int a = 0; a < add_per_step; ++a)
            corpus.push_back(static_cast<int>(rng::pick_index(eng, static_cast<std::size_t>(
                                                                       space.n_states))));
        result.snapshots.push_back(corpus);
    }

    result.std_series.reserve(result.snapshots.size());
    for (const auto& snapshot : result.snapshots) {
        std::size_t k = std::min<std::size_t>(1000, snapshot.size());
        rng::Engine sample_eng(sample_seed);
        auto idxs = rng::sample_without_replacement(sample_eng, snapshot.size(), k);
        std::vector<double> values;
        values.reserve(k);
        for (std::size_t idx : idxs)
            values.push_back(space.intrinsic_ppl[static_cast<std::size_t>(snapshot[idx])]);
        result.std_series.push_back(signals::population_std(values));
    }
    return result;
}

}  // namespace paracycle::sim
