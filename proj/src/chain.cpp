#include "paracycle/chain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "paracycle/errors.hpp"
#include "paracycle/io.hpp"

namespace paracycle {

using ordered_json = nlohmann::ordered_json;

std::string to_string(Task t) {
    switch (t) {
        case Task::paraphrase: return "paraphrase";
        case Task::polish: return "polish";
        case Task::clarify: return "clarify";
        case Task::formality: return "formality";
        case Task::translate: return "translate";
    }
    throw DomainError("unknown task enum value");
}

std::string to_string(Language l) {
    switch (l) {
        case Language::en: return "en";
        case Language::zh: return "zh";
    }
    throw DomainError("unknown language enum value");
}

Task task_from_string(const std::string& s) {
    if (s == "paraphrase") return Task::paraphrase;
    if (s == "polish") return Task::polish;
    if (s == "clarify") return Task::clarify;
    if (s == "formality") return Task::formality;
    if (s == "translate") return Task::translate;
    throw FormatError("unknown task: " + s);
}

Language language_from_string(const std::string& s) {
    if (s == "en") return Language::en;
    if (s == "zh") return Language::zh;
    throw FormatError("unknown language: " + s);
}

std::vector<std::string> validate_chain(const Chain& chain) {
    std::vector<std::string> violations;
    const auto add = [&](int step, const std::string& what) {
        violations.push_back("chain " + chain.chain_id + " step " + std::to_string(step) + ": " + what);
    };

    if (chain.steps.size() < 2) {
        violations.push_back("chain " + chain.chain_id + ": must have at least 2 steps (M >= 1), has " +
                             std::to_string(chain.steps.size()));
        if (chain.steps.empty()) return violations;
    }
    if (chain.steps[0].step != 0)
        add(chain.steps[0].step, "first record must be step 0");
    for (std::size_t i = 1; i < chain.steps.size(); ++i) {
        if (chain.steps[i].step != chain.steps[i - 1].step + 1) {
            add(chain.steps[i].step, "non-contiguous steps (previous was " +
                                         std::to_string(chain.steps[i - 1].step) + ")");
        }
    }

    std::optional<std::size_t> embed_dim;
    for (const auto& s : chain.steps) {
        if (s.text.empty()) add(s.step, "text is empty");
        if (s.step == 0) {
            if (!s.candidates.empty()) add(0, "step 0 must have no candidates");
            if (s.selected_index) add(0, "step 0 must have no selected_index");
        } else if (s.step > 0) {
            if (!s.selected_index) {
                add(s.step, "missing selected_index");
            } else if (*s.selected_index < 0 ||
                       static_cast<std::size_t>(*s.selected_index) >= s.candidates.size()) {
                add(s.step, "selected_index out of range");
            } else if (s.text != s.candidates[static_cast<std::size_t>(*s.selected_index)].text) {
                add(s.step, "text differs from candidates[selected_index].text");
            }
        } else {
            add(s.step, "negative step index");
        }
        for (std::size_t c = 0; c < s.candidates.size(); ++c) {
            const auto& cand = s.candidates[c];
            if (cand.text.empty()) add(s.step, "candidate " + std::to_string(c) + " text is empty");
            if (cand.sum_logprob && *cand.sum_logprob > 0)
                add(s.step, "candidate " + std::to_string(c) + " sum_logprob is positive");
            if (cand.token_logprobs) {
                double sum = 0.0;
                bool positive = false;
                for (double lp : *cand.token_logprobs) {
                    sum += lp;
                    if (lp > 0) positive = true;
                }
                if (positive) add(s.step, "candidate " + std::to_string(c) + " has a positive token logprob");
                if (cand.sum_logprob && std::fabs(*cand.sum_logprob - sum) > 1e-6)
                    add(s.step, "candidate " + std::to_string(c) +
                                    " sum_logprob disagrees with token_logprobs sum");
            }
        }
        if (s.embedding) {
            if (!embed_dim) {
                embed_dim = s.embedding->size();
            } else if (*embed_dim != s.embedding->size()) {
                add(s.step, "embedding dimension differs from earlier steps");
            }
        }
    }
    return violations;
}

namespace {

ordered_json candidate_to_json(const Candidate& c) {
    ordered_json j;
    j["text"] = c.text;
    if (c.sum_logprob) j["sum_logprob"] = *c.sum_logprob;
    if (c.token_logprobs) j["token_logprobs"] = *c.token_logprobs;
    return j;
}

Candidate candidate_from_json(const ordered_json& j) {
    Candidate c;
    c.text = j.at("text").get<std::string>();
    if (j.contains("sum_logprob")) c.sum_logprob = j.at("sum_logprob").get<double>();
    if (j.contains("token_logprobs")) c.token_logprobs = j.at("token_logprobs").get<std::vector<double>>();
    return c;
}

ordered_json step_to_json(const Chain& chain, const StepRecord& s) {
    ordered_json j;
    j["run_id"] = chain.run_id;
    j["chain_id"] = chain.chain_id;
    j["task"] = to_string(chain.task);
    j["language"] = to_string(chain.language);
    j["step"] = s.step;
    j["text"] = s.text;
    j["prompt_id"] = s.prompt_id;
    j["model_id"] = s.model_id;
    j["temperature"] = s.temperature;
    ordered_json cands = ordered_json::array();
    for (const auto& c : s.candidates) cands.push_back(candidate_to_json(c));
    j["candidates"] = std::move(cands);
    if (s.selected_index) j["selected_index"] = *s.selected_index;
    if (s.embedding) j["embedding"] = *s.embedding;
    return j;
}

}  // namespace

std::string chain_to_jsonl(const Chain& chain) {
    std::string out;
    for (const auto& s : chain.steps) {
        out += step_to_json(chain, s).dump();
        out += '\n';
    }
    return out;
}

void save_chains(const std::vector<Chain>& chains, const std::string& path) {
    for (const auto& chain : chains) {
        auto violations = validate_chain(chain);
        if (!violations.empty())
            throw ValidationError("save_chains: invalid chain: " + violations.front());
    }
    std::vector<const Chain*> order;
    order.reserve(chains.size());
    for (const auto& c : chains) order.push_back(&c);
    std::stable_sort(order.begin(), order.end(), [](const Chain* a, const Chain* b) {
        if (a->run_id != b->run_id) return a->run_id < b->run_id;
        return a->chain_id < b->chain_id;
    });
    std::string out;
    for (const Chain* c : order) out += chain_to_jsonl(*c);
    io::write_file_atomic(path, out);
}

std::vector<Chain> load_chains(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);

    struct Group {
        Chain chain;
        std::vector<StepRecord> steps;
    };
    std::vector<std::pair<std::string, Group>> groups;  // keyed, in encounter order
    const auto find_group = [&](const std::string& key) -> Group* {
        for (auto& [k, g] : groups)
            if (k == key) return &g;
        return nullptr;
    };

    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("malformed JSON: ") + e.what(), line_no);
        }
        try {
            const std::string run_id = j.at("run_id").get<std::string>();
            const std::string chain_id = j.at("chain_id").get<std::string>();
            const std::string key = run_id + "\x1f" + chain_id;
            Group* g = find_group(key);
            if (!g) {
                Group fresh;
                fresh.chain.run_id = run_id;
                fresh.chain.chain_id = chain_id;
                fresh.chain.task = task_from_string(j.at("task").get<std::string>());
                fresh.chain.language = language_from_string(j.at("language").get<std::string>());
                groups.emplace_back(key, std::move(fresh));
                g = &groups.back().second;
            }
            StepRecord s;
            s.step = j.at("step").get<int>();
            s.text = j.at("text").get<std::string>();
            s.prompt_id = j.at("prompt_id").get<std::string>();
            s.model_id = j.at("model_id").get<std::string>();
            s.temperature = j.at("temperature").get<double>();
            for (const auto& cj : j.at("candidates")) s.candidates.push_back(candidate_from_json(cj));
            if (j.contains("selected_index")) s.selected_index = j.at("selected_index").get<int>();
            if (j.contains("embedding")) s.embedding = j.at("embedding").get<std::vector<double>>();
            g->steps.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("bad record: ") + e.what(), line_no);
        }
    }

    std::vector<Chain> out;
    out.reserve(groups.size());
    for (auto& [key, g] : groups) {
        std::stable_sort(g.steps.begin(), g.steps.end(),
                         [](const StepRecord& a, const StepRecord& b) { return a.step < b.step; });
        if (g.steps.empty() || g.steps.front().step != 0)
            throw FormatError("missing origin (step 0) for chain " + g.chain.chain_id);
        g.chain.steps = std::move(g.steps);
        out.push_back(std::move(g.chain));
    }
    return out;
}

}  // namespace paracycle
