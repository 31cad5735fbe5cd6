#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <thread>
#include <utility>

#include <nlohmann/json.hpp>

#include "paracycle/errors.hpp"
#include "paracycle/io.hpp"
#include "paracycle/rng.hpp"
#include "paracycle/runner.hpp"
#include "paracycle/signals.hpp"

namespace paracycle::runner {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(SelectionStrategy s) {
    switch (s) {
        case SelectionStrategy::highest_prob: return "highest_prob";
        case SelectionStrategy::max_ppl: return "max_ppl";
        case SelectionStrategy::min_ppl: return "min_ppl";
        case SelectionStrategy::random: return "random";
    }
    return "highest_prob";
}

SelectionStrategy strategy_from_string(const std::string& s) {
    if (s == "highest_prob") return SelectionStrategy::highest_prob;
    if (s == "max_ppl") return SelectionStrategy::max_ppl;
    if (s == "min_ppl") return SelectionStrategy::min_ppl;
    if (s == "random") return SelectionStrategy::random;
    throw FormatError("unknown selection strategy: " + s);
}

std::string to_string(ChainStatus s) {
    switch (s) {
        case ChainStatus::complete: return "complete";
        case ChainStatus::truncated: return "truncated";
        case ChainStatus::failed: return "failed";
    }
    return "complete";
}

void PromptTemplate::validate() const {
    if (prompt_id.empty()) throw ValidationError("prompt template has empty prompt_id");
    if (text.find("{text}") == std::string::npos)
        throw ValidationError("prompt template " + prompt_id + " lacks a {text} placeholder");
}

const std::vector<PromptTemplate>& builtin_prompts() {
    static const std::vector<PromptTemplate> kPrompts = {
        {"para_a", Task::paraphrase, "Please paraphrase the following text: {text}"},
        {"para_b", Task::paraphrase, "Please rephrase the text below: {text}"},
        {"para_c", Task::paraphrase, "Please rewrite the following text: {text}"},
        {"para_d", Task::paraphrase, "Please polish the text below: {text}"},
        {"para_complex", Task::paraphrase,
         "Please rewrite the following paragraph with the goal of enhancing lexical and "
         "syntactical variety without changing the original meaning. Pay attention to employing "
         "diverse vocabulary, increasing the complexity and variation of sentence structures, "
         "using different conjunctions and clause constructions to make the expression more "
         "diverse and rich, while maintaining the core information and logical coherence of the "
         "original text. Specifically, avoid repetitive sentence patterns and try to express the "
         "same ideas in different ways.\n\n{text}"},
        {"para_history", Task::paraphrase,
         "For reference only, an earlier version of this text read: {prev}\n"
         "Please paraphrase the following text: {text}"},
        {"polish_a", Task::polish, "Please polish the following text: {text}"},
        {"clarify_a", Task::clarify,
         "Please rewrite the following text in a way that is simpler and easier to understand, "
         "using clear language and shorter sentences without losing the original meaning: {text}"},
        {"formality_informal", Task::formality,
         "Transform the following text into an informal style: {text}"},
        {"formality_formal", Task::formality,
         "Rewrite the following text in a formal style: {text}"},
        {"translate_en_zh", Task::translate,
         "Please translate the following English text into Chinese: {text}"},
        {"translate_zh_en", Task::translate,
         "Please translate the following Chinese text into English: {text}"},
    };
    return kPrompts;
}

const PromptTemplate& find_prompt(const std::string& prompt_id) {
    for (const auto& tpl : builtin_prompts())
        if (tpl.prompt_id == prompt_id) return tpl;
    throw FormatError("unknown prompt_id: " + prompt_id);
}

namespace {

void replace_all(std::string& s, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

}  // namespace

std::string build_prompt(const PromptTemplate& tpl, const std::string& current,
                         const std::optional<std::string>& prev) {
    tpl.validate();
    if (tpl.history_capable() && !prev.has_value())
        throw DomainError("history template " + tpl.prompt_id + " requires a previous text");
    if (!tpl.history_capable() && prev.has_value())
        throw DomainError("template " + tpl.prompt_id + " takes no previous text");
    std::string out = tpl.text;
    if (prev.has_value()) replace_all(out, "{prev}", *prev);
    replace_all(out, "{text}", current);
    return out;
}

namespace {

double candidate_logprob_sum(const Candidate& c, std::size_t index) {
    if (c.sum_logprob.has_value()) return *c.sum_logprob;
    if (c.token_logprobs.has_value() && !c.token_logprobs->empty()) {
        double sum = 0.0;
        for (double lp : *c.token_logprobs) sum += lp;
        return sum;
    }
    throw DomainError("candidate " + std::to_string(index) + " has no logprobs for highest_prob selection");
}

const std::vector<double>& candidate_token_logprobs(const Candidate& c, std::size_t index,
                                                    const char* purpose) {
    if (!c.token_logprobs.has_value() || c.token_logprobs->empty())
        throw DomainError("candidate " + std::to_string(index) + " has no token_logprobs for " +
                          purpose);
    return *c.token_logprobs;
}

}  // namespace

std::size_t select_candidate(const std::vector<Candidate>& beam, SelectionStrategy strategy,
                             std::uint64_t seed, bool length_normalized) {
    if (beam.empty()) throw DomainError("select_candidate requires a non-empty beam");
    if (strategy == SelectionStrategy::random) {
        std::mt19937_64 eng(seed);
        return rng::pick_index(eng, beam.size());
    }
    std::size_t best = 0;
    double best_score = 0.0;
    for (std::size_t i = 0; i < beam.size(); ++i) {
        double score = 0.0;
        switch (strategy) {
            case SelectionStrategy::highest_prob:
                if (length_normalized) {
                    const auto& lps =
                        candidate_token_logprobs(beam[i], i, "length-normalized selection");
                    double sum = 0.0;
                    for (double lp : lps) sum += lp;
                    score = sum / static_cast<double>(lps.size());
                } else {
                    score = candidate_logprob_sum(beam[i], i);
                }
                break;
            case SelectionStrategy::max_ppl:
                score = signals::conditional_perplexity(
                    candidate_token_logprobs(beam[i], i, "perplexity selection"));
                break;
            case SelectionStrategy::min_ppl:
                score = -signals::conditional_perplexity(
                    candidate_token_logprobs(beam[i], i, "perplexity selection"));
                break;
            case SelectionStrategy::random:
                break;  // handled above
        }
        if (i == 0 || score > best_score) {
            best = i;
            best_score = score;
        }
    }
    return best;
}

std::string RunConfig::effective_run_id() const {
    if (!run_id.empty()) return run_id;
    char buf[32];
    std::snprintf(buf, sizeof buf, "run-%016" PRIx64, effective_seed());
    return buf;
}

void RunConfig::validate() const {
    if (rounds < 1) throw ValidationError("rounds must be >= 1");
    if (beams < 1) throw ValidationError("beams must be >= 1");
    if (temperature < 0.0) throw ValidationError("temperature must be >= 0");
    if (!(top_p > 0.0) || top_p > 1.0) throw ValidationError("top_p must be in (0, 1]");
    if (prompt_ids.empty()) throw ValidationError("prompt_ids must be non-empty");
    if (model_ids.empty()) throw ValidationError("model_ids must be non-empty");
    if (strategy == SelectionStrategy::random && !seed.has_value())
        throw ValidationError("strategy=random requires a seed");
    if (max_in_flight_chains < 1) throw ValidationError("max_in_flight_chains must be >= 1");
    for (const auto& id : prompt_ids) {
        const PromptTemplate& tpl = find_prompt(id);
        if (tpl.task != task)
            throw ValidationError("prompt " + id + " belongs to task " + paracycle::to_string(tpl.task) +
                                  ", config says " + paracycle::to_string(task));
        if (tpl.history_capable() != history_mode)
            throw ValidationError(history_mode
                                      ? "history_mode requires history-capable prompts; " + id +
                                            " has no {prev} slot"
                                      : "prompt " + id + " needs history_mode");
    }
    if (perturbation.has_value()) perturbation->validate();
}

ChainOutcome run_chain(const std::string& source, const RunConfig& config,
                       gateway::Backend& backend, const std::string& run_id,
                       const std::string& chain_id, std::uint64_t chain_seed) {
    if (source.empty()) throw DomainError("run_chain requires a non-empty source text");
    config.validate();

    ChainOutcome out;
    out.chain.run_id = run_id;
    out.chain.chain_id = chain_id;
    out.chain.task = config.task;
    out.chain.language = config.language;

    StepRecord origin;
    origin.step = 0;
    origin.text = source;
    if (config.embed_steps) {
        try {
            origin.embedding = backend.embed({source}).at(0);
        } catch (const BackendError& e) {
            out.status = ChainStatus::failed;
            out.error = std::string("step 0: ") + e.what();
            out.chain.steps.push_back(std::move(origin));
            return out;
        }
    }
    out.chain.steps.push_back(std::move(origin));

    std::string feed = source;      // text presented for transformation next round
    std::string prev_text = source; // reference slot for history prompts

    for (int i = 1; i <= config.rounds; ++i) {
        std::uint64_t step_seed = rng::split_seed(chain_seed, static_cast<std::uint64_t>(i));
        std::mt19937_64 eng(step_seed);
        std::size_t prompt_idx =
            config.prompt_ids.size() == 1 ? 0 : rng::pick_index(eng, config.prompt_ids.size());
        std::size_t model_idx =
            config.model_ids.size() == 1 ? 0 : rng::pick_index(eng, config.model_ids.size());
        std::uint64_t selection_seed = eng();

        const PromptTemplate& tpl = find_prompt(config.prompt_ids[prompt_idx]);
        std::string prompt = build_prompt(
            tpl, feed, config.history_mode ? std::optional<std::string>(prev_text) : std::nullopt);

        std::vector<Candidate> beam;
        try {
            beam = backend.chat_sample(prompt, config.beams, config.temperature, config.top_p,
                                       config.model_ids[model_idx]);
            if (beam.empty()) throw BackendError("backend returned an empty beam");
        } catch (const BackendError& e) {
            out.status = i == 1 ? ChainStatus::failed : ChainStatus::truncated;
            out.error = "step " + std::to_string(i) + ": " + e.what();
            return out;
        }

        std::size_t sel = select_candidate(beam, config.strategy, selection_seed,
                                           config.length_normalized);

        StepRecord rec;
        rec.step = i;
        rec.text = beam[sel].text;
        rec.candidates = std::move(beam);
        rec.selected_index = static_cast<int>(sel);
        rec.prompt_id = tpl.prompt_id;
        rec.model_id = config.model_ids[model_idx];
        rec.temperature = config.temperature;
        if (config.embed_steps) {
            try {
                rec.embedding = backend.embed({rec.text}).at(0);
            } catch (const BackendError& e) {
                out.status = i == 1 ? ChainStatus::failed : ChainStatus::truncated;
                out.error = "step " + std::to_string(i) + ": " + e.what();
                return out;
            }
        }

        prev_text = out.chain.steps.back().text;
        feed = rec.text;
        if (config.perturbation.has_value()) {
            perturb::PerturbSpec spec = *config.perturbation;
            spec.seed = rng::split_seed(spec.seed, static_cast<std::uint64_t>(i));
            feed = perturb::apply(feed, spec).text;
        }
        out.chain.steps.push_back(std::move(rec));
    }
    return out;
}

namespace {

std::string chain_id_for(std::size_t index) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "c%04zu", index);
    return buf;
}

std::int64_t manifest_timestamp() {
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch != nullptr && *epoch != '\0') {
        char* end = nullptr;
        long long v = std::strtoll(epoch, &end, 10);
        if (end != nullptr && *end == '\0') return static_cast<std::int64_t>(v);
    }
    return static_cast<std::int64_t>(std::time(nullptr));
}

}  // namespace

BatchResult run_batch(const std::vector<std::string>& sources, const RunConfig& config,
                      gateway::Backend& backend, const std::string& backend_name,
                      const std::string& model_name) {
    if (sources.empty()) throw DomainError("run_batch requires at least one source");
    config.validate();

    const std::string run_id = config.effective_run_id();
    std::vector<ChainOutcome> outcomes(sources.size());

    std::size_t workers = std::min<std::size_t>(
        static_cast<std::size_t>(config.max_in_flight_chains), sources.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= sources.size()) return;
            std::uint64_t chain_seed =
                rng::split_seed(config.effective_seed(), static_cast<std::uint64_t>(i));
            outcomes[i] =
                run_chain(sources[i], config, backend, run_id, chain_id_for(i), chain_seed);
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    BatchResult result;
    result.manifest.run_id = run_id;
    result.manifest.seed = config.effective_seed();
    result.manifest.backend = backend_name;
    result.manifest.model = model_name;
    result.manifest.config = config;
    result.manifest.created_unix = manifest_timestamp();
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const ChainOutcome& oc = outcomes[i];
        ManifestEntry entry;
        entry.chain_id = chain_id_for(i);
        entry.source = sources[i];
        entry.status = oc.status;
        entry.steps_completed = std::max(0, static_cast<int>(oc.chain.steps.size()) - 1);
        entry.error = oc.error;
        result.manifest.entries.push_back(std::move(entry));
        if (oc.status == ChainStatus::truncated)
            result.manifest.truncated_chain_ids.push_back(chain_id_for(i));
        if (oc.status != ChainStatus::failed) result.chains.push_back(oc.chain);
    }
    return result;
}

std::string manifest_to_json(const RunManifest& manifest) {
    ordered_json cfg;
    cfg["task"] = paracycle::to_string(manifest.config.task);
    cfg["language"] = paracycle::to_string(manifest.config.language);
    cfg["rounds"] = manifest.config.rounds;
    cfg["beams"] = manifest.config.beams;
    cfg["temperature"] = manifest.config.temperature;
    cfg["top_p"] = manifest.config.top_p;
    cfg["strategy"] = to_string(manifest.config.strategy);
    cfg["length_normalized"] = manifest.config.length_normalized;
    cfg["prompt_ids"] = manifest.config.prompt_ids;
    cfg["model_ids"] = manifest.config.model_ids;
    cfg["history_mode"] = manifest.config.history_mode;
    cfg["embed_steps"] = manifest.config.embed_steps;
    if (manifest.config.perturbation.has_value()) {
        const auto& p = *manifest.config.perturbation;
        cfg["perturbation"] = ordered_json{{"method", perturb::to_string(p.method)},
                                           {"rate", p.rate},
                                           {"seed", p.seed}};
    }

    ordered_json j;
    j["run_id"] = manifest.run_id;
    j["seed"] = manifest.seed;
    j["backend"] = manifest.backend;
    j["model"] = manifest.model;
    j["created_unix"] = manifest.created_unix;
    j["config"] = std::move(cfg);
    j["chains"] = ordered_json::array();
    for (const auto& e : manifest.entries) {
        ordered_json je;
        je["chain_id"] = e.chain_id;
        je["source"] = e.source;
        je["status"] = to_string(e.status);
        je["steps_completed"] = e.steps_completed;
        if (!e.error.empty()) je["error"] = e.error;
        j["chains"].push_back(std::move(je));
    }
    j["truncated_chain_ids"] = manifest.truncated_chain_ids;
    return j.dump(2) + "\n";
}

namespace {

[[noreturn]] void bad_key(const std::string& scope, const std::string& key) {
    throw FormatError("unknown " + scope + " config key: " + key);
}

void expect_type(bool ok, const std::string& key, const char* want) {
    if (!ok) throw FormatError("config key " + key + " must be " + want);
}

std::vector<std::string> string_list(const json& v, const std::string& key) {
    expect_type(v.is_array(), key, "an array of strings");
    std::vector<std::string> out;
    for (const auto& x : v) {
        expect_type(x.is_string(), key, "an array of strings");
        out.push_back(x.get<std::string>());
    }
    return out;
}

perturb::PerturbSpec parse_perturbation(const json& v, const std::string& base_dir) {
    expect_type(v.is_object(), "run.perturbation", "an object");
    perturb::PerturbSpec spec;
    for (const auto& [key, val] : v.items()) {
        if (key == "method") {
            expect_type(val.is_string(), "run.perturbation.method", "a string");
            spec.method = perturb::method_from_string(val.get<std::string>());
        } else if (key == "rate") {
            expect_type(val.is_number(), "run.perturbation.rate", "a number");
            spec.rate = val.get<double>();
        } else if (key == "seed") {
            expect_type(val.is_number_unsigned() ||
                            (val.is_number_integer() && val.get<std::int64_t>() >= 0),
                        "run.perturbation.seed", "a nonnegative integer");
            spec.seed = val.get<std::uint64_t>();
        } else if (key == "lexicon") {
            expect_type(val.is_string(), "run.perturbation.lexicon", "a path string");
            std::filesystem::path p = val.get<std::string>();
            if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
            spec.lexicon = perturb::load_lexicon(p.string());
        } else {
            bad_key("run.perturbation", key);
        }
    }
    return spec;
}

RunConfig parse_run_config(const json& v, const std::string& base_dir) {
    expect_type(v.is_object(), "run", "an object");
    RunConfig cfg;
    for (const auto& [key, val] : v.items()) {
        if (key == "task") {
            expect_type(val.is_string(), "run.task", "a string");
            cfg.task = task_from_string(val.get<std::string>());
        } else if (key == "language") {
            expect_type(val.is_string(), "run.language", "a string");
            cfg.language = language_from_string(val.get<std::string>());
        } else if (key == "rounds") {
            expect_type(val.is_number_integer(), "run.rounds", "an integer");
            cfg.rounds = val.get<int>();
        } else if (key == "beams") {
            expect_type(val.is_number_integer(), "run.beams", "an integer");
            cfg.beams = val.get<int>();
        } else if (key == "temperature") {
            expect_type(val.is_number(), "run.temperature", "a number");
            cfg.temperature = val.get<double>();
        } else if (key == "top_p") {
            expect_type(val.is_number(), "run.top_p", "a number");
            cfg.top_p = val.get<double>();
        } else if (key == "strategy") {
            expect_type(val.is_string(), "run.strategy", "a string");
            cfg.strategy = strategy_from_string(val.get<std::string>());
        } else if (key == "length_normalized") {
            expect_type(val.is_boolean(), "run.length_normalized", "a boolean");
            cfg.length_normalized = val.get<bool>();
        } else if (key == "prompt_ids") {
            cfg.prompt_ids = string_list(val, "run.prompt_ids");
        } else if (key == "model_ids") {
            cfg.model_ids = string_list(val, "run.model_ids");
        } else if (key == "history_mode") {
            expect_type(val.is_boolean(), "run.history_mode", "a boolean");
            cfg.history_mode = val.get<bool>();
        } else if (key == "embed_steps") {
            expect_type(val.is_boolean(), "run.embed_steps", "a boolean");
            cfg.embed_steps = val.get<bool>();
        } else if (key == "perturbation") {
            cfg.perturbation = parse_perturbation(val, base_dir);
        } else if (key == "seed") {
            expect_type(val.is_number_unsigned() ||
                            (val.is_number_integer() && val.get<std::int64_t>() >= 0),
                        "run.seed", "a nonnegative integer");
            cfg.seed = val.get<std::uint64_t>();
        } else if (key == "max_in_flight_chains") {
            expect_type(val.is_number_integer(), "run.max_in_flight_chains", "an integer");
            cfg.max_in_flight_chains = val.get<int>();
        } else if (key == "run_id") {
            expect_type(val.is_string(), "run.run_id", "a string");
            cfg.run_id = val.get<std::string>();
        } else {
            bad_key("run", key);
        }
    }
    return cfg;
}

gateway::BackendConfig parse_backend_config(const json& v) {
    expect_type(v.is_object(), "backend", "an object");
    gateway::BackendConfig cfg;
    for (const auto& [key, val] : v.items()) {
        if (key == "kind") {
            expect_type(val.is_string(), "backend.kind", "a string");
            std::string kind = val.get<std::string>();
            if (kind == "http") cfg.kind = gateway::BackendKind::http;
            else if (kind == "mock") cfg.kind = gateway::BackendKind::mock;
            else throw FormatError("backend.kind must be \"http\" or \"mock\"");
        } else if (key == "base_url") {
            expect_type(val.is_string(), "backend.base_url", "a string");
            cfg.base_url = val.get<std::string>();
        } else if (key == "api_key_env") {
            expect_type(val.is_string(), "backend.api_key_env", "a string");
            cfg.api_key_env = val.get<std::string>();
        } else if (key == "model") {
            expect_type(val.is_string(), "backend.model", "a string");
            cfg.model = val.get<std::string>();
        } else if (key == "timeout_seconds") {
            expect_type(val.is_number(), "backend.timeout_seconds", "a number");
            cfg.timeout_seconds = val.get<double>();
        } else if (key == "max_retries") {
            expect_type(val.is_number_integer(), "backend.max_retries", "an integer");
            cfg.max_retries = val.get<int>();
        } else if (key == "retry_backoff_seconds") {
            expect_type(val.is_number(), "backend.retry_backoff_seconds", "a number");
            cfg.retry_backoff_seconds = val.get<double>();
        } else if (key == "max_in_flight") {
            expect_type(val.is_number_integer(), "backend.max_in_flight", "an integer");
            cfg.max_in_flight = val.get<int>();
        } else {
            bad_key("backend", key);
        }
    }
    return cfg;
}

FileConfig parse_config_impl(const std::string& json_text, const std::string& base_dir) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("config is not valid JSON: ") + e.what());
    }
    expect_type(root.is_object(), "config", "an object");
    FileConfig out;
    bool saw_run = false;
    for (const auto& [key, val] : root.items()) {
        if (key == "run") {
            out.run = parse_run_config(val, base_dir);
            saw_run = true;
        } else if (key == "backend") {
            out.backend = parse_backend_config(val);
        } else {
            bad_key("top-level", key);
        }
    }
    if (!saw_run) throw FormatError("config lacks a \"run\" object");
    return out;
}

}  // namespace

FileConfig parse_config(const std::string& json_text) { return parse_config_impl(json_text, ""); }

FileConfig load_config(const std::string& path) {
    std::string text = io::read_file(path);
    std::string base_dir = std::filesystem::path(path).parent_path().string();
    return parse_config_impl(text, base_dir);
}

}  // namespace paracycle::runner
