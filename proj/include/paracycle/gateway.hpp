#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "paracycle/chain.hpp"

namespace paracycle::gateway {

enum class BackendKind { http, mock };

struct BackendConfig {
    BackendKind kind = BackendKind::mock;
    std::string base_url;          // http only, e.g. https://api.example.com/v1
    std::string api_key_env;       // name of the environment variable holding the key
    std::string model;
    double timeout_seconds = 30.0;
    int max_retries = 2;                 // attempts = max_retries + 1
    double retry_backoff_seconds = 1.0;  // doubles per attempt
    int max_in_flight = 4;               // http request concurrency cap

    void validate() const;  // http kind requires base_url
};

// Text generation, continuation scoring, and embeddings behind one surface.
// Scoring is a distinct capability: backends that cannot produce logprobs
// for an arbitrary continuation throw CapabilityError and callers skip the
// perplexity analyses.
class Backend {
public:
    virtual ~Backend() = default;

    std::vector<Candidate> chat_sample(const std::string& prompt, int n, double temperature,
                                       double top_p) {
        return chat_sample_impl(prompt, n, temperature, top_p, std::nullopt);
    }
    // Per-request model override, for runs that alternate between models.
    std::vector<Candidate> chat_sample(const std::string& prompt, int n, double temperature,
                                       double top_p, const std::string& model) {
        return chat_sample_impl(prompt, n, temperature, top_p, model);
    }

    virtual std::vector<double> score_continuation(const std::string& context,
                                                   const std::string& continuation) = 0;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;

protected:
    virtual std::vector<Candidate> chat_sample_impl(const std::string& prompt, int n,
                                                    double temperature, double top_p,
                                                    const std::optional<std::string>& model) = 0;
};

// A finite involution text <-> text: every key maps to a different text and
// applying the mapping twice is the identity. Canonical outputs score
// ln 0.9 per token, everything else ln 0.1 (token = whitespace word).
class MockTable {
public:
    static constexpr double kCanonicalLogprob = -0.10536051565782628;  // ln 0.9
    static constexpr double kOffCanonicalLogprob = -2.3025850929940455;  // ln 0.1
    static constexpr const char* kEchoMarker = "[unmapped] ";

    // Throws ValidationError unless pairs form an involution with no fixed
    // points.
    explicit MockTable(std::map<std::string, std::string> mapping);

    // Eight built-in sentence pairs; members of a pair differ by well over
    // 0.2 in character-level normalized edit distance.
    static MockTable builtin();

    // The involution image, or the echo-marker form for unknown texts.
    std::string image_of(const std::string& text) const;
    bool contains(const std::string& text) const;

    // Locates the table entry mentioned latest in a prompt (templates place
    // the payload at the end) and returns it; falls back to the text after
    // the last colon (trimmed), or the whole prompt.
    std::string extract_input(const std::string& prompt) const;

    // Deterministic beam variant: image plus " variant <k>".
    static std::string variant(const std::string& image, int k);

    const std::map<std::string, std::string>& mapping() const { return mapping_; }

private:
    std::map<std::string, std::string> mapping_;
};

// Deterministic offline backend: a pure function of its inputs.
class MockBackend : public Backend {
public:
    MockBackend() : table_(MockTable::builtin()) {}
    explicit MockBackend(MockTable table) : table_(std::move(table)) {}

    std::vector<double> score_continuation(const std::string& context,
                                           const std::string& continuation) override;
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

    const MockTable& table() const { return table_; }

    static constexpr std::size_t kEmbeddingDim = 64;

    // Signed feature hash of the word multiset, L2-normalized. Identical
    // texts map to identical vectors; disjoint vocabularies land nearly
    // orthogonal.
    static std::vector<double> hash_embedding(const std::string& text);

protected:
    std::vector<Candidate> chat_sample_impl(const std::string& prompt, int n, double temperature,
                                            double top_p,
                                            const std::optional<std::string>& model) override;

private:
    MockTable table_;
};

// OpenAI-compatible chat completions + embeddings client. Scoring throws
// CapabilityError (chat endpoints cannot score arbitrary continuations).
// The API key is read from the environment at request time and never logged.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(BackendConfig config);
    ~HttpBackend() override;

    std::vector<double> score_continuation(const std::string& context,
                                           const std::string& continuation) override;
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

protected:
    std::vector<Candidate> chat_sample_impl(const std::string& prompt, int n, double temperature,
                                            double top_p,
                                            const std::optional<std::string>& model) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& config);

}  // namespace paracycle::gateway
