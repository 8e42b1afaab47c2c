#include <atomic>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

#include "ruleloop/hash.hpp"
#include "ruleloop/http_backend.hpp"
#include "ruleloop/sim_backend.hpp"

using namespace ruleloop;
using nlohmann::json;

namespace {

DecodingConfig logprob_config() {
    DecodingConfig cfg;
    cfg.request_logprobs = true;
    return cfg;
}

SimScript scripted(std::vector<SimEntry> entries) {
    SimScript s;
    s.entries = std::move(entries);
    return s;
}

}  // namespace

TEST_CASE("scripted echo by match substring") {
    SimBackend sim(
        scripted({{"any", {"meaning of life"}, {}, {}, "42", {0.0, 0.0, 0.0}, {}, false}}));
    const auto out = sim.generate("system", "what is the meaning of life?", logprob_config());
    CHECK(out.text == "42");
    CHECK(out.finish_reason == FinishReason::stop);
    CHECK(out.token_logprobs == std::vector<double>{0.0, 0.0, 0.0});  // probability-1 tokens
    CHECK_FALSE(out.logprobs_estimated);
}

TEST_CASE("scripted entry by exact prompt digest") {
    const std::string prompt = "2+2?";
    SimEntry e;
    e.prompt_digest = hex64(fnv1a64(prompt));
    e.text = "4";
    SimBackend sim(scripted({e}));
    CHECK(sim.generate("s", prompt, {}).text == "4");
    CHECK(sim.generate("s", "2+3?", {}).text != "4");  // digest mismatch -> fallback
}

TEST_CASE("role-specific entries need a registered role") {
    SimEntry teacher_only{"teacher", {}, {}, {}, "from teacher", {}, {}, false};
    SimBackend sim(scripted({teacher_only}));
    sim.register_role("teacher", "I am the teacher");
    CHECK(sim.generate("I am the teacher", "q", {}).text == "from teacher");
    CHECK(sim.generate("someone else", "q", {}).text != "from teacher");
}

TEST_CASE("not_match entries let context flip the response") {
    SimBackend sim(scripted({
        {"any", {"trap", "HINT"}, {}, {}, "right", {}, {}, false},
        {"any", {"trap"}, {"HINT"}, {}, "wrong", {}, {}, false},
    }));
    CHECK(sim.generate("s", "the trap question", {}).text == "wrong");
    CHECK(sim.generate("s", "HINT\nthe trap question", {}).text == "right");
}

TEST_CASE("scripted transport failure throws") {
    SimEntry fail;
    fail.match = {"boom"};
    fail.fail = true;
    SimBackend sim(scripted({fail}));
    CHECK_THROWS_AS(sim.generate("s", "boom", {}), TransportError);
}

TEST_CASE("simulator determinism: same script and seed give identical outputs") {
    SimScript script;
    script.seed = 99;
    SimBackend a(script), b(script);
    for (const std::string prompt : {"alpha", "beta", "gamma"}) {
        const auto ra = a.generate("sys", prompt, logprob_config());
        const auto rb = b.generate("sys", prompt, logprob_config());
        CHECK(ra.text == rb.text);
        CHECK(ra.token_logprobs == rb.token_logprobs);
        CHECK(a.embed(prompt).values == b.embed(prompt).values);
    }
}

TEST_CASE("fallback logprobs are always <= 0") {
    SimBackend sim{SimScript{}};
    for (const std::string prompt : {"one", "two", "three", "four"}) {
        const auto out = sim.generate("sys", prompt, logprob_config());
        CHECK_FALSE(out.token_logprobs.empty());
        for (double lp : out.token_logprobs) CHECK(lp <= 0.0);
    }
}

TEST_CASE("embedding determinism and self-similarity") {
    SimBackend sim{SimScript{}};
    const auto a1 = sim.embed("a");
    const auto a2 = sim.embed("a");
    CHECK(a1.values == a2.values);
    CHECK(cosine_similarity(a1, a2) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a1.dimension() == 64);
}

TEST_CASE("embedding re-derivation from the documented hash-to-vector rule") {
    SimScript script;
    script.seed = 7;
    script.embedding_dimension = 16;
    SimBackend sim(script);

    auto derive = [&](const std::string& text) {
        std::uint64_t state = script.seed ^ fnv1a64(text);
        std::vector<double> v(script.embedding_dimension);
        double norm_sq = 0.0;
        for (double& x : v) {
            x = 2.0 * unit_double(splitmix64(state)) - 1.0;
            norm_sq += x * x;
        }
        for (double& x : v) x /= std::sqrt(norm_sq);
        return v;
    };

    for (const std::string text : {"first text", "second text"})
        CHECK(sim.embed(text).values == derive(text));

    // cosine of two distinct texts recomputed from the derived vectors
    const EmbeddingVector u{derive("first text")}, w{derive("second text")};
    CHECK(cosine_similarity(sim.embed("first text"), sim.embed("second text")) ==
          doctest::Approx(cosine_similarity(u, w)).epsilon(1e-12));
}

TEST_CASE("scripted embedding overrides") {
    SimScript script;
    script.embedding_dimension = 3;
    script.embeddings["north"] = {1.0, 0.0, 0.0};
    SimBackend sim(script);
    CHECK(sim.embed("north").values == std::vector<double>{1.0, 0.0, 0.0});
}

TEST_CASE("empty prompts are rejected") {
    SimBackend sim{SimScript{}};
    CHECK_THROWS_AS(sim.generate("", "user", {}), InvalidInputError);
    CHECK_THROWS_AS(sim.generate("sys", "", {}), InvalidInputError);
    CHECK_THROWS_AS(sim.embed(""), InvalidInputError);
}

// ---------------------------------------------------------------------------
// HTTP wire format
// ---------------------------------------------------------------------------

TEST_CASE("chat request carries exactly the contract fields") {
    DecodingConfig cfg;
    cfg.temperature = 0.7;
    cfg.top_p = 0.9;
    cfg.max_tokens = 256;
    cfg.request_logprobs = true;
    const json req = build_chat_request("m1", "sys", "usr", cfg);

    CHECK(req.size() == 6);
    CHECK(req["model"] == "m1");
    CHECK(req["temperature"] == 0.7);
    CHECK(req["top_p"] == 0.9);
    CHECK(req["max_tokens"] == 256);
    CHECK(req["logprobs"] == true);
    REQUIRE(req["messages"].size() == 2);
    CHECK(req["messages"][0]["role"] == "system");
    CHECK(req["messages"][0]["content"] == "sys");
    CHECK(req["messages"][1]["role"] == "user");
    CHECK(req["messages"][1]["content"] == "usr");
}

// Recorded chat-completion fixture in the standard OpenAI shape; text and
// logprobs must come back verbatim.
TEST_CASE("golden fixture round-trip") {
    const json fixture = json::parse(R"({
      "id": "chatcmpl-fixture-1",
      "object": "chat.completion",
      "model": "m1",
      "choices": [{
        "index": 0,
        "message": {"role": "assistant", "content": "The answer is 4."},
        "finish_reason": "stop",
        "logprobs": {"content": [
          {"token": "The", "logprob": -0.0051},
          {"token": " answer", "logprob": -0.1103},
          {"token": " is", "logprob": -0.0223},
          {"token": " 4", "logprob": -0.4812},
          {"token": ".", "logprob": -0.0019}
        ]}
      }],
      "usage": {"prompt_tokens": 12, "completion_tokens": 5}
    })");

    const auto out = parse_chat_response(fixture);
    CHECK(out.text == "The answer is 4.");
    CHECK(out.finish_reason == FinishReason::stop);
    CHECK_FALSE(out.logprobs_estimated);
    CHECK(out.token_logprobs ==
          std::vector<double>{-0.0051, -0.1103, -0.0223, -0.4812, -0.0019});
}

TEST_CASE("top-k-only logprobs are estimated and flagged") {
    const json fixture = json::parse(R"({
      "choices": [{
        "message": {"role": "assistant", "content": "x"},
        "finish_reason": "length",
        "logprobs": {"content": [
          {"token": "x", "top_logprobs": [{"token": "x", "logprob": -0.2},
                                           {"token": "y", "logprob": -1.5}]}
        ]}
      }]
    })");
    const auto out = parse_chat_response(fixture);
    CHECK(out.logprobs_estimated);
    CHECK(out.token_logprobs == std::vector<double>{-0.2});
    CHECK(out.finish_reason == FinishReason::length);
}

TEST_CASE("slightly positive backend scores are clamped to zero") {
    const json fixture = json::parse(R"({
      "choices": [{
        "message": {"content": "y"},
        "finish_reason": "stop",
        "logprobs": {"content": [{"token": "y", "logprob": 1e-9}]}
      }]
    })");
    CHECK(parse_chat_response(fixture).token_logprobs == std::vector<double>{0.0});
}

TEST_CASE("malformed payloads raise protocol errors") {
    CHECK_THROWS_AS(parse_chat_response(json::parse(R"({"nope": 1})")), ProtocolError);
    CHECK_THROWS_AS(parse_chat_response(json::parse(R"({"choices": []})")), ProtocolError);
    CHECK_THROWS_AS(parse_embedding_response(json::parse(R"({"data": []})")), ProtocolError);
}

TEST_CASE("embedding response parsing") {
    const json fixture = json::parse(R"({"data": [{"embedding": [0.1, -0.2, 0.3]}]})");
    CHECK(parse_embedding_response(fixture).values == std::vector<double>{0.1, -0.2, 0.3});
}

// ---------------------------------------------------------------------------
// Live loopback server: wire fidelity and retry behaviour
// ---------------------------------------------------------------------------

namespace {

struct LocalServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;

    explicit LocalServer() {
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~LocalServer() {
        server.stop();
        thread.join();
    }
    std::string url(const std::string& prefix = "/v1") const {
        return "http://127.0.0.1:" + std::to_string(port) + prefix;
    }
};

}  // namespace

TEST_CASE("request json observed on the wire matches the contract") {
    LocalServer ls;
    json seen;
    ls.server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        res.set_content(R"({"choices":[{"message":{"content":"ok"},"finish_reason":"stop"}]})",
                        "application/json");
    });

    HttpBackendConfig cfg;
    cfg.base_url = ls.url();
    cfg.model = "test-model";
    cfg.api_key = "sk-secret";
    HttpBackend backend(cfg);

    DecodingConfig dec;
    dec.temperature = 0.0;
    dec.top_p = 1.0;
    dec.max_tokens = 64;
    dec.request_logprobs = true;
    const auto out = backend.generate("be brief", "hello", dec);
    CHECK(out.text == "ok");

    std::vector<std::string> keys;
    for (const auto& [k, v] : seen.items()) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    CHECK(keys == std::vector<std::string>{"logprobs", "max_tokens", "messages", "model",
                                           "temperature", "top_p"});
    CHECK(seen["model"] == "test-model");
    CHECK(seen["temperature"] == 0.0);
    CHECK(seen["max_tokens"] == 64);
    CHECK(seen["logprobs"] == true);
}

TEST_CASE("transient 500s are retried and then succeed") {
    LocalServer ls;
    std::atomic<int> hits{0};
    ls.server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        if (++hits < 3) {
            res.status = 500;
            res.set_content("transient", "text/plain");
            return;
        }
        res.set_content(R"({"choices":[{"message":{"content":"recovered"},"finish_reason":"stop"}]})",
                        "application/json");
    });

    HttpBackendConfig cfg;
    cfg.base_url = ls.url();
    cfg.model = "m";
    cfg.backoff_base_ms = 1;
    HttpBackend backend(cfg);
    CHECK(backend.generate("s", "u", {}).text == "recovered");
    CHECK(hits == 3);
}

TEST_CASE("persistent failure exhausts the attempt budget") {
    LocalServer ls;
    std::atomic<int> hits{0};
    ls.server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 503;
    });

    HttpBackendConfig cfg;
    cfg.base_url = ls.url();
    cfg.model = "m";
    cfg.backoff_base_ms = 1;
    HttpBackend backend(cfg);
    try {
        backend.generate("s", "u", {});
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK(e.attempts() == 3);
    }
    CHECK(hits == 3);
}

TEST_CASE("context-length rejection surfaces the overflow error") {
    LocalServer ls;
    ls.server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        res.status = 400;
        res.set_content(
            R"({"error":{"message":"This model's maximum context length is 8192 tokens, you requested 9000 tokens"}})",
            "application/json");
    });

    HttpBackendConfig cfg;
    cfg.base_url = ls.url();
    cfg.model = "m";
    HttpBackend backend(cfg);
    try {
        backend.generate("s", "u", {});
        FAIL("expected ContextOverflowError");
    } catch (const ContextOverflowError& e) {
        CHECK(e.token_count() == 9000);
    }
}

TEST_CASE("embeddings round-trip over the wire") {
    LocalServer ls;
    json seen;
    ls.server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        res.set_content(R"({"data":[{"embedding":[1.0, 0.0]}]})", "application/json");
    });

    HttpBackendConfig cfg;
    cfg.base_url = ls.url();
    cfg.model = "m";
    cfg.embedding_model = "emb";
    HttpBackend backend(cfg);
    CHECK(backend.embed("some text").values == std::vector<double>{1.0, 0.0});
    CHECK(seen["model"] == "emb");
    CHECK(seen["input"] == "some text");
    CHECK(backend.embedding_dimension() == 2);
}
