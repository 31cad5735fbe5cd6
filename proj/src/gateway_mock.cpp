#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>

#include "paracycle/errors.hpp"
#include "paracycle/gateway.hpp"
#include "paracycle/text.hpp"

namespace paracycle::gateway {

void BackendConfig::validate() const {
    if (kind == BackendKind::http && base_url.empty())
        throw ValidationError("http backend requires base_url");
    if (timeout_seconds <= 0.0) throw ValidationError("timeout_seconds must be positive");
    if (max_retries < 0) throw ValidationError("max_retries must be >= 0");
    if (retry_backoff_seconds < 0.0) throw ValidationError("retry_backoff_seconds must be >= 0");
    if (max_in_flight < 1) throw ValidationError("max_in_flight must be >= 1");
}

MockTable::MockTable(std::map<std::string, std::string> mapping) : mapping_(std::move(mapping)) {
    for (const auto& [key, value] : mapping_) {
        if (key.empty() || value.empty()) throw ValidationError("mock table entries must be non-empty");
        if (key == value) throw ValidationError("mock table entry maps to itself: " + key);
        auto back = mapping_.find(value);
        if (back == mapping_.end() || back->second != key)
            throw ValidationError("mock table is not an involution at: " + key);
    }
}

MockTable MockTable::builtin() {
    static const std::pair<const char*, const char*> kPairs[] = {
        {"The quick brown fox jumps over the lazy dog.",
         "A speedy auburn fox leaps across the idle hound."},
        {"Rain fell steadily on the quiet village all night.",
         "All night long, steady rain soaked the sleepy hamlet."},
        {"She finished the report well before the deadline.",
         "The report was completed by her far ahead of schedule."},
        {"The committee approved the budget after a long debate.",
         "Following lengthy discussion, the panel passed the spending plan."},
        {"He walked to the station under a grey morning sky.",
         "Beneath overcast morning clouds, he strolled toward the depot."},
        {"The experiment produced several surprising results.",
         "A number of unexpected findings emerged from the trial."},
        {"Children played in the park until the sun set.",
         "Until sundown, the kids romped around the playground."},
        {"The old library smelled of dust and worn paper.",
         "Dust and well-thumbed paper scented the ancient reading hall."},
    };
    std::map<std::string, std::string> m;
    for (const auto& [a, b] : kPairs) {
        m.emplace(a, b);
        m.emplace(b, a);
    }
    return MockTable(std::move(m));
}

std::string MockTable::image_of(const std::string& text) const {
    auto it = mapping_.find(text);
    if (it != mapping_.end()) return it->second;
    if (text.rfind(kEchoMarker, 0) == 0) return text;  // already marked: echo is idempotent
    return std::string(kEchoMarker) + text;
}

bool MockTable::contains(const std::string& text) const { return mapping_.count(text) > 0; }

std::string MockTable::extract_input(const std::string& prompt) const {
    // Templates embed the payload at the end, so prefer the latest match.
    std::size_t best_pos = std::string::npos;
    std::size_t best_len = 0;
    for (const auto& [key, value] : mapping_) {
        (void)value;
        std::size_t pos = prompt.rfind(key);
        if (pos == std::string::npos) continue;
        if (best_pos == std::string::npos || pos > best_pos ||
            (pos == best_pos && key.size() > best_len)) {
            best_pos = pos;
            best_len = key.size();
        }
    }
    if (best_pos != std::string::npos) return prompt.substr(best_pos, best_len);

    std::size_t marker = prompt.rfind(kEchoMarker);
    if (marker != std::string::npos) return prompt.substr(marker);

    std::size_t colon = prompt.rfind(": ");
    std::string out = colon == std::string::npos ? prompt : prompt.substr(colon + 2);
    std::size_t begin = out.find_first_not_of(" \t\n\r\f\v");
    std::size_t end = out.find_last_not_of(" \t\n\r\f\v");
    if (begin == std::string::npos) return out;
    return out.substr(begin, end - begin + 1);
}

std::string MockTable::variant(const std::string& image, int k) {
    return image + " variant " + std::to_string(k);
}

namespace {

std::size_t token_count(const std::string& text) {
    std::size_t n = text::split_words(text).size();
    return n == 0 ? 1 : n;
}

Candidate make_candidate(const std::string& text, double per_token_logprob) {
    Candidate c;
    c.text = text;
    std::vector<double> lps(token_count(text), per_token_logprob);
    double sum = 0.0;
    for (double lp : lps) sum += lp;
    c.token_logprobs = std::move(lps);
    c.sum_logprob = sum;
    return c;
}

}  // namespace

std::vector<Candidate> MockBackend::chat_sample_impl(const std::string& prompt, int n,
                                                     double temperature, double top_p,
                                                     const std::optional<std::string>& model) {
    (void)temperature;
    (void)top_p;
    (void)model;  // mock output is model-independent
    if (n < 1) throw DomainError("chat_sample requires n >= 1");
    std::string input = table_.extract_input(prompt);
    std::string image = table_.image_of(input);
    std::vector<Candidate> beam;
    beam.reserve(static_cast<std::size_t>(n));
    beam.push_back(make_candidate(image, MockTable::kCanonicalLogprob));
    for (int k = 1; k < n; ++k)
        beam.push_back(make_candidate(MockTable::variant(image, k), MockTable::kOffCanonicalLogprob));
    return beam;
}

std::vector<double> MockBackend::score_continuation(const std::string& context,
                                                    const std::string& continuation) {
    if (continuation.empty()) throw DomainError("score_continuation requires a non-empty continuation");
    std::string expected = table_.image_of(table_.extract_input(context));
    double lp = continuation == expected ? MockTable::kCanonicalLogprob
                                         : MockTable::kOffCanonicalLogprob;
    return std::vector<double>(token_count(continuation), lp);
}

std::vector<double> MockBackend::hash_embedding(const std::string& text) {
    std::vector<double> v(kEmbeddingDim, 0.0);
    for (const std::string& word : text::split_words(text)) {
        std::uint64_t h = 1469598103934665603ull;  // FNV-1a 64
        for (unsigned char ch : word) {
            h ^= ch;
            h *= 1099511628211ull;
        }
        double sign = (h >> 63) ? 1.0 : -1.0;
        v[(h >> 32) % kEmbeddingDim] += sign;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm == 0.0) {
        v[0] = 1.0;  // degenerate text: pin to a fixed unit vector
        return v;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

std::vector<std::vector<double>> MockBackend::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw DomainError("embed requires at least one text");
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(hash_embedding(t));
    return out;
}

}  // namespace paracycle::gateway
