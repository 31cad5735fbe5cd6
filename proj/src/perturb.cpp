#include "paracycle/perturb.hpp"

#include <cmath>

#include "paracycle/errors.hpp"
#include "paracycle/io.hpp"
#include "paracycle/metrics.hpp"
#include "paracycle/rng.hpp"
#include "paracycle/text.hpp"

namespace paracycle::perturb {

std::string to_string(Method m) {
    switch (m) {
        case Method::synonym_replace: return "synonym_replace";
        case Method::word_swap: return "word_swap";
        case Method::insert_delete: return "insert_delete";
    }
    throw DomainError("unknown perturbation method");
}

Method method_from_string(const std::string& s) {
    if (s == "synonym_replace") return Method::synonym_replace;
    if (s == "word_swap") return Method::word_swap;
    if (s == "insert_delete") return Method::insert_delete;
    throw FormatError("unknown perturbation method: " + s);
}

Lexicon parse_lexicon(const std::string& content) {
    Lexicon lex;
    std::size_t pos = 0;
    long line_no = 0;
    while (pos <= content.size()) {
        std::size_t end = content.find('\n', pos);
        if (end == std::string::npos) end = content.size();
        ++line_no;
        std::string line = content.substr(pos, end - pos);
        pos = end + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            if (pos > content.size()) break;
            continue;
        }
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw FormatError("lexicon line has no TAB separator", line_no);
        const std::string word = line.substr(0, tab);
        std::vector<std::string> synonyms;
        std::size_t s = tab + 1;
        while (s <= line.size()) {
            std::size_t comma = line.find(',', s);
            if (comma == std::string::npos) comma = line.size();
            if (comma > s) synonyms.push_back(line.substr(s, comma - s));
            s = comma + 1;
        }
        if (word.empty() || synonyms.empty())
            throw FormatError("lexicon entry needs a word and at least one synonym", line_no);
        lex[word] = std::move(synonyms);
        if (pos > content.size()) break;
    }
    return lex;
}

Lexicon load_lexicon(const std::string& path) { return parse_lexicon(io::read_file(path)); }

void PerturbSpec::validate() const {
    if (!(rate > 0.0) || rate > 1.0) throw DomainError("perturbation rate must be in (0, 1]");
    if (method == Method::synonym_replace && lexicon.empty())
        throw DomainError("synonym_replace requires a lexicon");
    if (method != Method::synonym_replace && !lexicon.empty())
        throw DomainError("lexicon is only meaningful for synonym_replace");
}

PerturbResult apply(const std::string& input, const PerturbSpec& spec) {
    spec.validate();
    auto words = text::split_words(input);
    const std::size_t word_count = words.size();
    if (word_count == 0) throw DomainError("perturb: text has no words");
    if (spec.method == Method::word_swap && word_count < 2)
        throw DomainError("word_swap needs at least 2 words");

    const int budget = static_cast<int>(std::ceil(spec.rate * static_cast<double>(word_count)));
    auto eng = rng::make_engine(spec.seed);

    PerturbResult result;
    int applied = 0;
    for (int op = 0; op < budget; ++op) {
        switch (spec.method) {
            case Method::synonym_replace: {
                bool done = false;
                // Retry fresh positions up to word_count times per operation.
                for (std::size_t attempt = 0; attempt < word_count && !done; ++attempt) {
                    const std::size_t pos = rng::pick_index(eng, words.size());
                    auto it = spec.lexicon.find(words[pos]);
                    if (it == spec.lexicon.end()) continue;
                    words[pos] = it->second[rng::pick_index(eng, it->second.size())];
                    done = true;
                }
                if (done) {
                    ++applied;
                } else {
                    result.shortfall = true;
                }
                break;
            }
            case Method::word_swap: {
                const std::size_t pos = rng::pick_index(eng, words.size() - 1);
                std::swap(words[pos], words[pos + 1]);
                ++applied;
                break;
            }
            case Method::insert_delete: {
                const bool remove = rng::unit_double(eng) < 0.5;
                if (remove && words.size() > 1) {
                    words.erase(words.begin() +
                                static_cast<std::ptrdiff_t>(rng::pick_index(eng, words.size())));
                } else {
                    const std::string dup = words[rng::pick_index(eng, words.size())];
                    const std::size_t at = rng::pick_index(eng, words.size() + 1);
                    words.insert(words.begin() + static_cast<std::ptrdiff_t>(at), dup);
                }
                ++applied;
                break;
            }
        }
    }
    result.text = text::join_words(words);
    result.edit_count = applied;
    return result;
}

bool verify_edit_budget(const std::string& original, const std::string& perturbed,
                        const PerturbSpec& spec) {
    const std::size_t wc = text::split_words(original).size();
    const int budget = static_cast<int>(std::ceil(spec.rate * static_cast<double>(wc)));
    const auto ua = metrics::split_units(original, metrics::Granularity::word);
    const auto ub = metrics::split_units(perturbed, metrics::Granularity::word);
    return metrics::levenshtein(ua, ub) <= static_cast<std::size_t>(2 * budget);
}

}  // namespace paracycle::perturb
