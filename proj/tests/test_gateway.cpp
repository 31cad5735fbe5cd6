#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "paracycle/errors.hpp"
#include "paracycle/gateway.hpp"
#include "paracycle/metrics.hpp"
#include "paracycle/text.hpp"

using namespace paracycle;
using gateway::Backend;
using gateway::BackendConfig;
using gateway::BackendKind;
using gateway::HttpBackend;
using gateway::MockBackend;
using gateway::MockTable;
using nlohmann::json;

TEST_CASE("builtin mock table is an involution without fixed points") {
    const MockTable table = MockTable::builtin();
    CHECK(table.mapping().size() >= 16);  // eight pairs, both directions
    for (const auto& [key, value] : table.mapping()) {
        CHECK(key != value);
        CHECK(table.image_of(key) == value);
        CHECK(table.image_of(value) == key);
        CHECK(table.image_of(table.image_of(key)) == key);
        // Pair members differ clearly at character level.
        CHECK(metrics::normalized_edit_distance(key, value, metrics::Granularity::character) > 0.2);
    }
}

TEST_CASE("mock table echoes unknown texts with a marker") {
    const MockTable table = MockTable::builtin();
    const std::string unknown = "this sentence is not part of the table";
    const std::string marked = table.image_of(unknown);
    CHECK(marked == std::string(MockTable::kEchoMarker) + unknown);
    // Applying the image again does not stack markers.
    CHECK(table.image_of(marked) == marked);
    CHECK_FALSE(table.contains(unknown));
}

TEST_CASE("mock table rejects non-involutions") {
    using Mapping = std::map<std::string, std::string>;
    CHECK_THROWS_AS(MockTable(Mapping{{"a", "b"}}), ValidationError);              // missing reverse
    CHECK_THROWS_AS(MockTable(Mapping{{"a", "b"}, {"b", "c"}}), ValidationError);  // not symmetric
    CHECK_THROWS_AS(MockTable(Mapping{{"a", "a"}}), ValidationError);              // fixed point
    CHECK_NOTHROW(MockTable(Mapping{{"a", "b"}, {"b", "a"}}));
}

TEST_CASE("extract_input finds the table text inside a prompt") {
    const MockTable table = MockTable::builtin();
    const std::string key = table.mapping().begin()->first;

    CHECK(table.extract_input("Please paraphrase the following text: " + key) == key);
    CHECK(table.extract_input(key) == key);

    // With two table texts present, the one mentioned last wins (prompts put
    // the payload after any reference material).
    const std::string other = std::next(table.mapping().begin())->first;
    CHECK(table.extract_input("Earlier version: " + other + "\nNow transform: " + key) == key);

    // Unknown payloads fall back to the text after the last colon.
    CHECK(table.extract_input("Do something with this: brand new words") == "brand new words");
    // No colon at all: the whole prompt.
    CHECK(table.extract_input("just some words") == "just some words");
}

TEST_CASE("mock chat_sample produces the canonical image plus variants") {
    MockBackend backend;
    const std::string key = backend.table().mapping().begin()->first;
    const std::string image = backend.table().image_of(key);

    const auto beam = backend.chat_sample("Please paraphrase the following text: " + key, 3, 0.6, 0.9);
    REQUIRE(beam.size() == 3);
    CHECK(beam[0].text == image);
    CHECK(beam[1].text == MockTable::variant(image, 1));
    CHECK(beam[2].text == MockTable::variant(image, 2));

    // Candidate 0 scores ln 0.9 per token; variants score ln 0.1.
    REQUIRE(beam[0].token_logprobs.has_value());
    for (double lp : *beam[0].token_logprobs) CHECK(lp == MockTable::kCanonicalLogprob);
    for (double lp : *beam[1].token_logprobs) CHECK(lp == MockTable::kOffCanonicalLogprob);

    // sum_logprob is consistent with the token list.
    double sum = 0.0;
    for (double lp : *beam[0].token_logprobs) sum += lp;
    CHECK(*beam[0].sum_logprob == doctest::Approx(sum).epsilon(1e-12));

    // The beam is a pure function of the prompt.
    const auto again = backend.chat_sample("Please paraphrase the following text: " + key, 3, 0.6, 0.9);
    CHECK(again[0].text == beam[0].text);
    CHECK(again[2].text == beam[2].text);

    CHECK_THROWS_AS((void)backend.chat_sample("x", 0, 0.6, 0.9), DomainError);
}

TEST_CASE("two mock rounds return to the original text") {
    MockBackend backend;
    const std::string original = backend.table().mapping().begin()->first;
    const auto once = backend.chat_sample("Please paraphrase the following text: " + original, 1, 0.6, 0.9);
    const auto twice =
        backend.chat_sample("Please paraphrase the following text: " + once[0].text, 1, 0.6, 0.9);
    CHECK(twice[0].text == original);
}

TEST_CASE("mock score_continuation distinguishes canonical continuations") {
    MockBackend backend;
    const std::string key = backend.table().mapping().begin()->first;
    const std::string image = backend.table().image_of(key);
    const std::string context = "Please paraphrase the following text: " + key;

    const auto canonical = backend.score_continuation(context, image);
    for (double lp : canonical) CHECK(lp == MockTable::kCanonicalLogprob);

    const auto off = backend.score_continuation(context, "something else entirely");
    REQUIRE(off.size() == 3);  // one logprob per whitespace token
    for (double lp : off) CHECK(lp == MockTable::kOffCanonicalLogprob);

    CHECK(canonical.size() == text::split_words(image).size());

    CHECK_THROWS_AS((void)backend.score_continuation(context, ""), DomainError);
}

TEST_CASE("mock embeddings are unit-norm, deterministic, and vocabulary-sensitive") {
    MockBackend backend;
    const auto e = backend.embed({"the quick brown fox", "the quick brown fox",
                                  "zebra quartz violin nimbus"});
    REQUIRE(e.size() == 3);
    for (const auto& v : e) {
        REQUIRE(v.size() == MockBackend::kEmbeddingDim);
        double norm = 0.0;
        for (double x : v) norm += x * x;
        CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(e[0] == e[1]);
    // Disjoint vocabularies land nearly orthogonal.
    CHECK(std::fabs(metrics::cosine_similarity(e[0], e[2])) < 0.3);

    CHECK_THROWS_AS((void)backend.embed({}), DomainError);
}

TEST_CASE("backend config validation") {
    BackendConfig config;
    config.kind = BackendKind::http;
    CHECK_THROWS_AS(config.validate(), ValidationError);  // missing base_url
    config.base_url = "http://127.0.0.1:9999/v1";
    CHECK_NOTHROW(config.validate());
    config.timeout_seconds = 0.0;
    CHECK_THROWS_AS(config.validate(), ValidationError);
    config.timeout_seconds = 5.0;
    config.max_retries = -1;
    CHECK_THROWS_AS(config.validate(), ValidationError);
    config.max_retries = 0;
    config.max_in_flight = 0;
    CHECK_THROWS_AS(config.validate(), ValidationError);
}

namespace {

// Minimal OpenAI-style server for exercising the HTTP backend.
class LocalServer {
  public:
    LocalServer() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LocalServer() {
        server_.stop();
        thread_.join();
    }

    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
    httplib::Server& server() { return server_; }

  private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

BackendConfig http_config(const std::string& base_url) {
    BackendConfig config;
    config.kind = BackendKind::http;
    config.base_url = base_url;
    config.api_key_env = "PARACYCLE_TEST_KEY";
    config.model = "test-model";
    config.timeout_seconds = 5.0;
    config.max_retries = 2;
    config.retry_backoff_seconds = 0.01;  // keep retry tests fast
    return config;
}

}  // namespace

TEST_CASE("http backend sends an OpenAI-style chat request and parses the reply") {
    LocalServer server;
    json seen_body;
    std::string seen_auth;
    server.server().Post("/v1/chat/completions",
                         [&](const httplib::Request& req, httplib::Response& res) {
                             seen_body = json::parse(req.body);
                             seen_auth = req.get_header_value("Authorization");
                             json reply;
                             reply["choices"][0]["message"]["content"] = "first reply";
                             reply["choices"][0]["logprobs"]["content"][0]["logprob"] = -0.1;
                             reply["choices"][0]["logprobs"]["content"][1]["logprob"] = -0.3;
                             reply["choices"][1]["message"]["content"] = "second reply";
                             res.set_content(reply.dump(), "application/json");
                         });

    setenv("PARACYCLE_TEST_KEY", "secret-key-123", 1);
    HttpBackend backend(http_config(server.base_url()));
    const auto beam = backend.chat_sample("hello there", 2, 0.7, 0.95);

    REQUIRE(beam.size() == 2);
    CHECK(beam[0].text == "first reply");
    REQUIRE(beam[0].token_logprobs.has_value());
    CHECK(beam[0].token_logprobs->size() == 2);
    CHECK(beam[0].sum_logprob == doctest::Approx(-0.4));
    CHECK(beam[1].text == "second reply");
    CHECK_FALSE(beam[1].token_logprobs.has_value());

    CHECK(seen_auth == "Bearer secret-key-123");
    CHECK(seen_body["model"] == "test-model");
    CHECK(seen_body["n"] == 2);
    CHECK(seen_body["temperature"] == doctest::Approx(0.7));
    CHECK(seen_body["top_p"] == doctest::Approx(0.95));
    CHECK(seen_body["messages"][0]["role"] == "user");
    CHECK(seen_body["messages"][0]["content"] == "hello there");
    CHECK(seen_body["logprobs"] == true);
}

TEST_CASE("http backend honours a per-request model override") {
    LocalServer server;
    std::string seen_model;
    server.server().Post("/v1/chat/completions",
                         [&](const httplib::Request& req, httplib::Response& res) {
                             seen_model = json::parse(req.body)["model"];
                             json reply;
                             reply["choices"][0]["message"]["content"] = "ok";
                             res.set_content(reply.dump(), "application/json");
                         });
    HttpBackend backend(http_config(server.base_url()));
    (void)backend.chat_sample("text", 1, 0.6, 0.9, "other-model");
    CHECK(seen_model == "other-model");
    (void)backend.chat_sample("text", 1, 0.6, 0.9);
    CHECK(seen_model == "test-model");
}

TEST_CASE("http backend retries transient failures with bounded attempts") {
    LocalServer server;
    std::atomic<int> hits{0};
    server.server().Post("/v1/chat/completions",
                         [&](const httplib::Request&, httplib::Response& res) {
                             if (hits.fetch_add(1) == 0) {
                                 res.status = 500;
                                 res.set_content("transient", "text/plain");
                                 return;
                             }
                             json reply;
                             reply["choices"][0]["message"]["content"] = "recovered";
                             res.set_content(reply.dump(), "application/json");
                         });
    HttpBackend backend(http_config(server.base_url()));
    const auto beam = backend.chat_sample("x", 1, 0.6, 0.9);
    CHECK(beam[0].text == "recovered");
    CHECK(hits.load() == 2);
}

TEST_CASE("http backend gives up after max_retries + 1 attempts") {
    LocalServer server;
    std::atomic<int> hits{0};
    server.server().Post("/v1/chat/completions",
                         [&](const httplib::Request&, httplib::Response& res) {
                             hits.fetch_add(1);
                             res.status = 503;
                             res.set_content("still down", "text/plain");
                         });
    auto config = http_config(server.base_url());
    config.max_retries = 2;
    HttpBackend backend(config);
    CHECK_THROWS_AS((void)backend.chat_sample("x", 1, 0.6, 0.9), BackendError);
    CHECK(hits.load() == 3);
}

TEST_CASE("http backend does not retry client errors and never leaks the key") {
    LocalServer server;
    std::atomic<int> hits{0};
    server.server().Post("/v1/chat/completions",
                         [&](const httplib::Request&, httplib::Response& res) {
                             hits.fetch_add(1);
                             res.status = 401;
                             res.set_content("{\"error\": \"bad auth\"}", "application/json");
                         });
    setenv("PARACYCLE_TEST_KEY", "secret-key-123", 1);
    HttpBackend backend(http_config(server.base_url()));
    try {
        (void)backend.chat_sample("x", 1, 0.6, 0.9);
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("401") != std::string::npos);
        CHECK(msg.find("secret-key-123") == std::string::npos);
    }
    CHECK(hits.load() == 1);
}

TEST_CASE("http backend reports malformed JSON bodies") {
    LocalServer server;
    server.server().Post("/v1/chat/completions",
                         [&](const httplib::Request&, httplib::Response& res) {
                             res.set_content("not json at all", "application/json");
                         });
    HttpBackend backend(http_config(server.base_url()));
    CHECK_THROWS_AS((void)backend.chat_sample("x", 1, 0.6, 0.9), BackendError);
}

TEST_CASE("http backend parses embeddings and restores their order") {
    LocalServer server;
    server.server().Post("/v1/embeddings",
                         [&](const httplib::Request& req, httplib::Response& res) {
                             const json body = json::parse(req.body);
                             CHECK(body["input"].size() == 2);
                             // Deliberately answer out of order.
                             json reply;
                             reply["data"][0]["index"] = 1;
                             reply["data"][0]["embedding"] = {0.0, 1.0};
                             reply["data"][1]["index"] = 0;
                             reply["data"][1]["embedding"] = {1.0, 0.0};
                             res.set_content(reply.dump(), "application/json");
                         });
    HttpBackend backend(http_config(server.base_url()));
    const auto e = backend.embed({"first", "second"});
    REQUIRE(e.size() == 2);
    CHECK(e[0] == std::vector<double>{1.0, 0.0});
    CHECK(e[1] == std::vector<double>{0.0, 1.0});
}

TEST_CASE("http backend cannot score continuations") {
    LocalServer server;
    HttpBackend backend(http_config(server.base_url()));
    CHECK_THROWS_AS((void)backend.score_continuation("context", "continuation"), CapabilityError);
}

TEST_CASE("make_backend builds the configured kind") {
    BackendConfig mock_config;
    mock_config.kind = BackendKind::mock;
    const auto mock = gateway::make_backend(mock_config);
    CHECK(dynamic_cast<MockBackend*>(mock.get()) != nullptr);

    BackendConfig http;
    http.kind = BackendKind::http;
    http.base_url = "http://127.0.0.1:9999/v1";
    const auto backend = gateway::make_backend(http);
    CHECK(dynamic_cast<HttpBackend*>(backend.get()) != nullptr);
}
