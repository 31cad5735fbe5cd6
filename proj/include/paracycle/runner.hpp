#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "paracycle/chain.hpp"
#include "paracycle/gateway.hpp"
#include "paracycle/perturb.hpp"

namespace paracycle::runner {

enum class SelectionStrategy { highest_prob, max_ppl, min_ppl, random };

std::string to_string(SelectionStrategy s);
SelectionStrategy strategy_from_string(const std::string& s);

// A prompt with a {text} placeholder; history-capable templates also carry a
// {prev} placeholder that receives the previous round's text as reference
// material only — never as the text to transform.
struct PromptTemplate {
    std::string prompt_id;
    Task task = Task::paraphrase;
    std::string text;

    bool history_capable() const { return text.find("{prev}") != std::string::npos; }
    void validate() const;  // ValidationError unless {text} is present
};

// Built-in templates: para_a..para_d, para_complex, para_history, polish_a,
// clarify_a, formality_informal, formality_formal, translate_en_zh,
// translate_zh_en.
const std::vector<PromptTemplate>& builtin_prompts();

// FormatError on unknown id.
const PromptTemplate& find_prompt(const std::string& prompt_id);

// Placeholder substitution, verbatim otherwise. prev must be supplied iff
// the template is history-capable (DomainError otherwise).
std::string build_prompt(const PromptTemplate& tpl, const std::string& current,
                         const std::optional<std::string>& prev);

// highest_prob: argmax sum_logprob (token-logprob sum when the field is
// absent); max_ppl / min_ppl: arg-extremum of conditional perplexity;
// random: seeded uniform pick. Ties break to the lowest index.
// length_normalized switches highest_prob to per-token mean logprob.
// DomainError names the candidate when a required logprob is missing.
std::size_t select_candidate(const std::vector<Candidate>& beam, SelectionStrategy strategy,
                             std::uint64_t seed, bool length_normalized = false);

struct RunConfig {
    Task task = Task::paraphrase;
    Language language = Language::en;
    int rounds = 15;  // M
    int beams = 10;   // n
    double temperature = 0.6;
    double top_p = 0.9;
    SelectionStrategy strategy = SelectionStrategy::highest_prob;
    bool length_normalized = false;  // highest_prob on per-token mean logprob
    std::vector<std::string> prompt_ids;
    std::vector<std::string> model_ids;
    bool history_mode = false;
    bool embed_steps = false;  // store an embedding of every step's text
    std::optional<perturb::PerturbSpec> perturbation;
    std::optional<std::uint64_t> seed;
    int max_in_flight_chains = 4;
    std::string run_id;  // default: "run-" + 16 hex digits of the seed

    std::uint64_t effective_seed() const { return seed.value_or(0); }
    std::string effective_run_id() const;
    void validate() const;
};

enum class ChainStatus { complete, truncated, failed };

std::string to_string(ChainStatus s);

// run_chain never throws on backend failure: a chain that lost its gateway
// mid-flight is truncated at the last complete step and the error is
// reported here. failed means not even step 1 completed.
struct ChainOutcome {
    Chain chain;
    ChainStatus status = ChainStatus::complete;
    std::string error;
};

struct ManifestEntry {
    std::string chain_id;
    std::string source;
    ChainStatus status = ChainStatus::complete;
    int steps_completed = 0;  // transformation rounds recorded
    std::string error;
};

struct RunManifest {
    std::string run_id;
    std::uint64_t seed = 0;
    std::string backend;  // "mock" or "http"
    std::string model;
    RunConfig config;
    std::vector<ManifestEntry> entries;
    std::vector<std::string> truncated_chain_ids;
    std::int64_t created_unix = 0;  // SOURCE_DATE_EPOCH when set, else now
};

std::string manifest_to_json(const RunManifest& manifest);

// One transformation chain: T_0 = source, then for i = 1..M sample a beam,
// select a candidate, and (when configured) perturb the text that feeds the
// next round — the recorded step text stays the selected candidate.
ChainOutcome run_chain(const std::string& source, const RunConfig& config,
                       gateway::Backend& backend, const std::string& run_id,
                       const std::string& chain_id, std::uint64_t chain_seed);

struct BatchResult {
    std::vector<Chain> chains;  // complete + truncated (failed ones carry no data)
    RunManifest manifest;
};

// One chain per source, concurrently up to config.max_in_flight_chains.
// Chain i uses seed split_seed(config seed, i), so concurrency never changes
// results. DomainError on empty sources.
BatchResult run_batch(const std::vector<std::string>& sources, const RunConfig& config,
                      gateway::Backend& backend, const std::string& backend_name,
                      const std::string& model_name);

// Config file: JSON object with a "run" object (RunConfig fields by name)
// and an optional "backend" object (BackendConfig fields). Unknown keys are
// FormatErrors so typos surface instead of silently using defaults.
struct FileConfig {
    RunConfig run;
    gateway::BackendConfig backend;
};

FileConfig parse_config(const std::string& json_text);
FileConfig load_config(const std::string& path);

}  // namespace paracycle::runner
