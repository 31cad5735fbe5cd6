#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace paracycle {

enum class Task { paraphrase, polish, clarify, formality, translate };
enum class Language { en, zh };

std::string to_string(Task t);
std::string to_string(Language l);
Task task_from_string(const std::string& s);
Language language_from_string(const std::string& s);

// One beam element: the generated text plus its log-probabilities
// (natural-log scale, when the backend reported them).
struct Candidate {
    std::string text;
    std::optional<double> sum_logprob;
    std::optional<std::vector<double>> token_logprobs;

    bool operator==(const Candidate&) const = default;
};

// One step of a transformation chain. Step 0 is the original text and has
// no candidates and no selected_index.
struct StepRecord {
    int step = 0;
    std::string text;
    std::vector<Candidate> candidates;
    std::optional<int> selected_index;
    std::string prompt_id;
    std::string model_id;
    double temperature = 0.0;
    std::optional<std::vector<double>> embedding;

    bool operator==(const StepRecord&) const = default;
};

// A source text plus M ordered transformation steps.
struct Chain {
    std::string run_id;
    std::string chain_id;
    Task task = Task::paraphrase;
    Language language = Language::en;
    std::vector<StepRecord> steps;

    bool operator==(const Chain&) const = default;

    // Number of transformation rounds (steps.size() - 1 when well-formed).
    int rounds() const { return static_cast<int>(steps.size()) - 1; }
};

// Empty iff all Chain/StepRecord invariants hold; each violation names the
// step and the invariant. Violations are data, not errors.
std::vector<std::string> validate_chain(const Chain& chain);

// JSONL persistence: one StepRecord object per line, keys in canonical order
// (run_id, chain_id, task, language, step, text, prompt_id, model_id,
// temperature, candidates, selected_index, embedding), lines ordered by
// (run_id, chain_id, step). Absent optionals are omitted, not null.
//
// load_chains throws FormatError with a line number on malformed JSON and
// on a group whose first step is missing ("missing origin").
std::vector<Chain> load_chains(const std::string& path);

// Validates every chain first (throws ValidationError), then writes
// atomically. load_chains(save_chains(x)) == x, and output bytes are a pure
// function of the input.
void save_chains(const std::vector<Chain>& chains, const std::string& path);

// Serialization of a single chain to JSONL lines (used by save_chains and
// by tests that pin the canonical byte form).
std::string chain_to_jsonl(const Chain& chain);

}  // namespace paracycle
