#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "paracycle/errors.hpp"
#include "paracycle/io.hpp"
#include "paracycle/perturb.hpp"
#include "paracycle/text.hpp"
#include "support/tempdir.hpp"

using namespace paracycle;
using perturb::Lexicon;
using perturb::Method;
using perturb::PerturbSpec;

namespace {

Lexicon small_lexicon() {
    return {
        {"quick", {"fast", "speedy"}},
        {"brown", {"auburn"}},
        {"lazy", {"idle", "sluggish"}},
        {"dog", {"hound"}},
        {"fox", {"vixen"}},
    };
}

// Closed under replacement: every synonym is itself a key, so a position
// stays replaceable no matter how often it has been rewritten and every
// operation can land. Only such lexicons guarantee edit_count == budget.
Lexicon closed_lexicon() {
    return {
        {"quick", {"swift"}},    {"swift", {"quick"}},
        {"river", {"stream"}},   {"stream", {"river"}},
        {"house", {"dwelling"}}, {"dwelling", {"house"}},
        {"road", {"path"}},      {"path", {"road"}},
        {"happy", {"glad"}},     {"glad", {"happy"}},
        {"ship", {"vessel"}},    {"vessel", {"ship"}},
    };
}

}  // namespace

TEST_CASE("method string round-trips") {
    for (Method m : {Method::synonym_replace, Method::word_swap, Method::insert_delete}) {
        CHECK(perturb::method_from_string(perturb::to_string(m)) == m);
    }
    CHECK_THROWS_AS((void)perturb::method_from_string("typo_injection"), FormatError);
}

TEST_CASE("parse_lexicon reads TAB-separated entries") {
    const auto lex = perturb::parse_lexicon("cat\tfeline,kitty\ndog\thound\n");
    REQUIRE(lex.size() == 2);
    CHECK(lex.at("cat") == std::vector<std::string>{"feline", "kitty"});
    CHECK(lex.at("dog") == std::vector<std::string>{"hound"});

    // Blank lines and CRLF endings are tolerated.
    const auto crlf = perturb::parse_lexicon("cat\tfeline\r\n\r\ndog\thound\r\n");
    CHECK(crlf.size() == 2);
}

TEST_CASE("parse_lexicon rejects malformed lines with line numbers") {
    try {
        (void)perturb::parse_lexicon("cat\tfeline\nno-tab-here\n");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.line_number == 2);
        CHECK(std::string(e.what()).find("TAB") != std::string::npos);
    }
    CHECK_THROWS_AS((void)perturb::parse_lexicon("cat\t\n"), FormatError);   // no synonyms
    CHECK_THROWS_AS((void)perturb::parse_lexicon("\tfeline\n"), FormatError);  // no word
}

TEST_CASE("load_lexicon reads from a file") {
    testsupport::TempDir dir;
    const std::string path = dir.file("lex.tsv");
    io::write_file_atomic(path, "cat\tfeline\n");
    CHECK(perturb::load_lexicon(path).size() == 1);
    CHECK_THROWS_AS((void)perturb::load_lexicon(dir.file("absent.tsv")), IoError);
}

TEST_CASE("spec validation") {
    PerturbSpec spec;
    spec.method = Method::synonym_replace;
    spec.lexicon = small_lexicon();
    spec.rate = 0.0;
    CHECK_THROWS_AS(spec.validate(), DomainError);
    spec.rate = 1.5;
    CHECK_THROWS_AS(spec.validate(), DomainError);
    spec.rate = 0.2;
    CHECK_NOTHROW(spec.validate());
    spec.lexicon.clear();
    CHECK_THROWS_AS(spec.validate(), DomainError);  // synonym_replace needs a lexicon
    spec.method = Method::word_swap;
    CHECK_NOTHROW(spec.validate());
    spec.lexicon = small_lexicon();
    CHECK_THROWS_AS(spec.validate(), DomainError);  // lexicon without synonym_replace
}

TEST_CASE("apply is deterministic for a fixed seed") {
    PerturbSpec spec;
    spec.method = Method::insert_delete;
    spec.rate = 0.3;
    spec.seed = 42;
    const std::string input = "one two three four five six seven eight";
    const auto a = perturb::apply(input, spec);
    const auto b = perturb::apply(input, spec);
    CHECK(a.text == b.text);
    CHECK(a.edit_count == b.edit_count);

    spec.seed = 43;
    const auto c = perturb::apply(input, spec);
    // A different seed is allowed to produce the same text, but across many
    // seeds at least one must differ.
    bool any_different = (c.text != a.text);
    for (std::uint64_t s = 44; !any_different && s < 60; ++s) {
        spec.seed = s;
        any_different = (perturb::apply(input, spec).text != a.text);
    }
    CHECK(any_different);
}

TEST_CASE("synonym_replace spends its whole budget when the lexicon covers the text") {
    PerturbSpec spec;
    spec.method = Method::synonym_replace;
    spec.lexicon = small_lexicon();
    spec.rate = 0.5;
    spec.seed = 7;
    const std::string input = "quick brown lazy dog fox quick";  // 6 words, all covered
    const auto result = perturb::apply(input, spec);
    CHECK(result.edit_count == 3);  // ceil(0.5 * 6)
    CHECK_FALSE(result.shortfall);
    CHECK(text::split_words(result.text).size() == 6);  // word count preserved
    CHECK(perturb::verify_edit_budget(input, result.text, spec));
}

TEST_CASE("synonym_replace reports a shortfall when few words are replaceable") {
    PerturbSpec spec;
    spec.method = Method::synonym_replace;
    spec.lexicon = Lexicon{{"dog", {"hound"}}};
    spec.rate = 1.0;
    spec.seed = 3;
    // Budget is 5 but only one word has a synonym; once it is replaced by
    // "hound" no position remains applicable.
    const auto result = perturb::apply("the dog sat very still", spec);
    CHECK(result.shortfall);
    CHECK(result.edit_count < 5);
    CHECK(result.text.find("hound") != std::string::npos);
    CHECK(perturb::verify_edit_budget("the dog sat very still", result.text, spec));
}

TEST_CASE("word_swap exchanges adjacent words and needs two of them") {
    PerturbSpec spec;
    spec.method = Method::word_swap;
    spec.rate = 0.4;
    spec.seed = 11;
    const std::string input = "alpha beta gamma delta epsilon";
    const auto result = perturb::apply(input, spec);
    CHECK(result.edit_count == 2);  // ceil(0.4 * 5)
    const auto in_words = text::split_words(input);
    auto out_words = text::split_words(result.text);
    REQUIRE(out_words.size() == in_words.size());
    std::multiset<std::string> in_set(in_words.begin(), in_words.end());
    std::multiset<std::string> out_set(out_words.begin(), out_words.end());
    CHECK(in_set == out_set);  // swaps permute, never change the words
    CHECK(perturb::verify_edit_budget(input, result.text, spec));

    CHECK_THROWS_AS((void)perturb::apply("single", spec), DomainError);
}

TEST_CASE("insert_delete changes the word count by one per operation") {
    PerturbSpec spec;
    spec.method = Method::insert_delete;
    spec.rate = 0.25;
    const std::string input = "one two three four";
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        spec.seed = seed;
        const auto result = perturb::apply(input, spec);
        CHECK(result.edit_count == 1);
        const auto n = text::split_words(result.text).size();
        CHECK((n == 3 || n == 5));
        CHECK(perturb::verify_edit_budget(input, result.text, spec));
    }
}

TEST_CASE("apply rejects empty text") {
    PerturbSpec spec;
    spec.method = Method::insert_delete;
    spec.rate = 0.1;
    CHECK_THROWS_AS((void)perturb::apply("", spec), DomainError);
    CHECK_THROWS_AS((void)perturb::apply("   ", spec), DomainError);
}

TEST_CASE("random draws stay within the edit budget") {
    // A smaller version of the acceptance sweep, kept here so regressions
    // surface in the unit suite first.
    const auto lex = closed_lexicon();
    std::vector<std::string> keys;
    for (const auto& [word, synonyms] : lex) keys.push_back(word);

    std::mt19937_64 eng(99);
    for (int trial = 0; trial < 200; ++trial) {
        const int wc = 2 + static_cast<int>(eng() % 12);
        std::vector<std::string> words;
        for (int i = 0; i < wc; ++i) words.push_back(keys[eng() % keys.size()]);
        const std::string input = text::join_words(words);

        PerturbSpec spec;
        const int which = static_cast<int>(eng() % 3);
        spec.method = which == 0   ? Method::synonym_replace
                      : which == 1 ? Method::word_swap
                                   : Method::insert_delete;
        if (spec.method == Method::synonym_replace) spec.lexicon = lex;
        spec.rate = 0.05 + 0.95 * (static_cast<double>(eng() % 1000) / 1000.0);
        spec.seed = eng();

        const auto result = perturb::apply(input, spec);
        const int budget = static_cast<int>(std::ceil(spec.rate * wc));
        CHECK(perturb::verify_edit_budget(input, result.text, spec));
        CHECK(result.edit_count == budget);  // full coverage: no shortfall possible
        CHECK_FALSE(result.shortfall);
    }
}
