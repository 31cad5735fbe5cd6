#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace paracycle::perturb {

enum class Method { synonym_replace, word_swap, insert_delete };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

using Lexicon = std::map<std::string, std::vector<std::string>>;

// One line per entry: word TAB synonyms comma-separated.
Lexicon load_lexicon(const std::string& path);
Lexicon parse_lexicon(const std::string& content);

struct PerturbSpec {
    Method method = Method::synonym_replace;
    double rate = 0.05;        // fraction of the text edited, in (0, 1]
    Lexicon lexicon;           // required for synonym_replace
    std::uint64_t seed = 0;

    void validate() const;  // throws DomainError on a bad spec
};

struct PerturbResult {
    std::string text;
    int edit_count = 0;      // operations actually applied
    bool shortfall = false;  // synonym_replace found fewer applicable positions than budgeted
};

// Applies ceil(rate * word_count) word-level operations at seeded-random
// positions. synonym_replace keeps the word count; word_swap exchanges two
// adjacent words; insert_delete deletes a word or duplicates one of the
// text's own words with equal probability. Deterministic given (text, spec).
// Tokens are rejoined with single spaces.
PerturbResult apply(const std::string& input, const PerturbSpec& spec);

// True iff word-level Levenshtein(original, perturbed) stays within twice
// the operation budget (a swap costs up to 2 unit edits).
bool verify_edit_budget(const std::string& original, const std::string& perturbed,
                        const PerturbSpec& spec);

}  // namespace paracycle::perturb
