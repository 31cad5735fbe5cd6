#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "paracycle/errors.hpp"
#include "paracycle/gateway.hpp"

namespace paracycle::gateway {

using nlohmann::json;

namespace {

struct ParsedUrl {
    std::string scheme_host_port;  // e.g. http://localhost:8080
    std::string path_prefix;       // e.g. /v1 (no trailing slash)
    bool https = false;
};

ParsedUrl parse_base_url(const std::string& base_url) {
    std::size_t scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos)
        throw ValidationError("base_url must include a scheme: " + base_url);
    std::string scheme = base_url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https")
        throw ValidationError("unsupported base_url scheme: " + scheme);
    ParsedUrl out;
    out.https = scheme == "https";
    std::size_t path_start = base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        out.scheme_host_port = base_url;
    } else {
        out.scheme_host_port = base_url.substr(0, path_start);
        out.path_prefix = base_url.substr(path_start);
        while (!out.path_prefix.empty() && out.path_prefix.back() == '/')
            out.path_prefix.pop_back();
    }
    if (out.scheme_host_port.size() <= scheme_end + 3)
        throw ValidationError("base_url has no host: " + base_url);
    return out;
}

bool retryable_status(int status) { return status == 429 || (status >= 500 && status < 600); }

}  // namespace

struct HttpBackend::Impl {
    BackendConfig config;
    ParsedUrl url;
    httplib::Client client;
    std::mutex gate_mutex;
    std::condition_variable gate_cv;
    int in_flight = 0;

    explicit Impl(BackendConfig cfg) : config(std::move(cfg)), url(parse_base_url(config.base_url)),
                                       client(url.scheme_host_port) {
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
        if (url.https)
            throw BackendError("https base_url requires a TLS-enabled build; use http or rebuild with OpenSSL");
#endif
        auto seconds = std::chrono::duration<double>(config.timeout_seconds);
        auto usec = std::chrono::duration_cast<std::chrono::microseconds>(seconds);
        client.set_connection_timeout(usec);
        client.set_read_timeout(usec);
        client.set_write_timeout(usec);
        client.set_keep_alive(true);
    }

    httplib::Headers headers() const {
        httplib::Headers h;
        if (!config.api_key_env.empty()) {
            const char* key = std::getenv(config.api_key_env.c_str());
            if (key != nullptr && key[0] != '\0')
                h.emplace("Authorization", std::string("Bearer ") + key);
        }
        return h;
    }

    // POSTs with retry on transport errors, 429 and 5xx. The API key never
    // appears in error text.
    json post_json(const std::string& path, const json& body) {
        std::unique_lock<std::mutex> gate(gate_mutex);
        gate_cv.wait(gate, [&] { return in_flight < config.max_in_flight; });
        ++in_flight;
        gate.unlock();
        struct Release {
            Impl* impl;
            ~Release() {
                {
                    std::lock_guard<std::mutex> lock(impl->gate_mutex);
                    --impl->in_flight;
                }
                impl->gate_cv.notify_one();
            }
        } release{this};

        std::string payload = body.dump();
        std::string last_error;
        int attempts = config.max_retries + 1;
        for (int attempt = 0; attempt < attempts; ++attempt) {
            if (attempt > 0 && config.retry_backoff_seconds > 0.0) {
                double wait = config.retry_backoff_seconds * static_cast<double>(1 << (attempt - 1));
                std::this_thread::sleep_for(std::chrono::duration<double>(wait));
            }
            httplib::Result res = client.Post(url.path_prefix + path, headers(), payload,
                                              "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 200) {
                try {
                    return json::parse(res->body);
                } catch (const json::exception& e) {
                    throw BackendError(std::string("malformed response from ") + path + ": " +
                                       e.what());
                }
            }
            std::string detail = res->body.substr(0, 256);
            if (retryable_status(res->status)) {
                last_error = "HTTP " + std::to_string(res->status) + " from " + path + ": " + detail;
                continue;
            }
            throw BackendError("HTTP " + std::to_string(res->status) + " from " + path + ": " +
                               detail);
        }
        throw BackendError("request to " + path + " failed after " + std::to_string(attempts) +
                           " attempts; last: " + last_error);
    }
};

HttpBackend::HttpBackend(BackendConfig config) {
    config.validate();
    if (config.kind != BackendKind::http)
        throw ValidationError("HttpBackend requires an http backend config");
    impl_ = std::make_unique<Impl>(std::move(config));
}

HttpBackend::~HttpBackend() = default;

std::vector<Candidate> HttpBackend::chat_sample_impl(const std::string& prompt, int n,
                                                     double temperature, double top_p,
                                                     const std::optional<std::string>& model) {
    if (n < 1) throw DomainError("chat_sample requires n >= 1");
    json body = {
        {"model", model.value_or(impl_->config.model)},
        {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
        {"n", n},
        {"temperature", temperature},
        {"top_p", top_p},
        {"logprobs", true},
    };
    json res = impl_->post_json("/chat/completions", body);
    if (!res.contains("choices") || !res["choices"].is_array() || res["choices"].empty())
        throw BackendError("chat response has no choices");
    std::vector<Candidate> beam;
    for (const auto& choice : res["choices"]) {
        Candidate c;
        if (!choice.contains("message") || !choice["message"].contains("content") ||
            !choice["message"]["content"].is_string())
            throw BackendError("chat choice has no message content");
        c.text = choice["message"]["content"].get<std::string>();
        if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
            choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
            std::vector<double> lps;
            for (const auto& tok : choice["logprobs"]["content"]) {
                if (!tok.contains("logprob") || !tok["logprob"].is_number())
                    throw BackendError("chat logprob entry is malformed");
                lps.push_back(tok["logprob"].get<double>());
            }
            if (!lps.empty()) {
                double sum = 0.0;
                for (double lp : lps) sum += lp;
                c.token_logprobs = std::move(lps);
                c.sum_logprob = sum;
            }
        }
        beam.push_back(std::move(c));
    }
    return beam;
}

std::vector<double> HttpBackend::score_continuation(const std::string& context,
                                                    const std::string& continuation) {
    (void)context;
    (void)continuation;
    throw CapabilityError(
        "chat-completions backends cannot score a fixed continuation; "
        "perplexity analyses need a backend with scoring support");
}

std::vector<std::vector<double>> HttpBackend::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) return {};
    json body = {{"model", impl_->config.model}, {"input", texts}};
    json res = impl_->post_json("/embeddings", body);
    if (!res.contains("data") || !res["data"].is_array())
        throw BackendError("embeddings response has no data array");
    std::vector<std::vector<double>> out(texts.size());
    std::vector<bool> seen(texts.size(), false);
    for (const auto& item : res["data"]) {
        if (!item.contains("index") || !item["index"].is_number_integer() ||
            !item.contains("embedding") || !item["embedding"].is_array())
            throw BackendError("embeddings entry is malformed");
        auto idx = item["index"].get<std::int64_t>();
        if (idx < 0 || static_cast<std::size_t>(idx) >= out.size())
            throw BackendError("embeddings entry index out of range");
        std::vector<double> v;
        for (const auto& x : item["embedding"]) {
            if (!x.is_number()) throw BackendError("embeddings entry is malformed");
            v.push_back(x.get<double>());
        }
        out[static_cast<std::size_t>(idx)] = std::move(v);
        seen[static_cast<std::size_t>(idx)] = true;
    }
    for (std::size_t i = 0; i < seen.size(); ++i)
        if (!seen[i]) throw BackendError("embeddings response missing input " + std::to_string(i));
    return out;
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
    config.validate();
    if (config.kind == BackendKind::mock) return std::make_unique<MockBackend>();
    return std::make_unique<HttpBackend>(config);
}

}  // namespace paracycle::gateway
