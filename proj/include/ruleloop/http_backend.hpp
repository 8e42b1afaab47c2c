#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "ruleloop/gateway.hpp"

namespace ruleloop {

struct HttpBackendConfig {
    std::string base_url;  // e.g. "http://127.0.0.1:8080/v1"
    std::string model;
    std::string embedding_model;  // defaults to `model` when empty
    std::string api_key;
    int max_attempts = 3;
    int backoff_base_ms = 250;
    int timeout_sec = 120;
};

// Chat-completions request body. The wire contract is exactly these fields:
// model, messages, temperature, top_p, max_tokens, logprobs.
inline nlohmann::json build_chat_request(const std::string& model,
                                         const std::string& system_prompt,
                                         const std::string& user_prompt,
                                         const DecodingConfig& cfg) {
    return nlohmann::json{
        {"model", model},
        {"messages",
         nlohmann::json::array({
             {{"role", "system"}, {"content", system_prompt}},
             {{"role", "user"}, {"content", user_prompt}},
         })},
        {"temperature", cfg.temperature},
        {"top_p", cfg.top_p},
        {"max_tokens", cfg.max_tokens},
        {"logprobs", cfg.request_logprobs},
    };
}

// Extracts text, finish reason and per-token logprobs from a standard
// chat-completions payload. When an item lacks the chosen-token logprob but
// carries top_logprobs, the best alternative is used and the result is
// flagged estimated. Slightly positive scores from lossy backends are
// clamped to 0 so reported logprobs stay <= 0.
inline GenerationResult parse_chat_response(const nlohmann::json& payload) {
    GenerationResult result;
    try {
        const auto& choices = payload.at("choices");
        if (!choices.is_array() || choices.empty())
            throw ProtocolError("chat response: empty choices");
        const auto& choice = choices[0];
        const auto& message = choice.at("message");
        if (message.contains("content") && !message["content"].is_null())
            result.text = message["content"].get<std::string>();

        const std::string reason = choice.value("finish_reason", "stop");
        if (reason == "stop")
            result.finish_reason = FinishReason::stop;
        else if (reason == "length")
            result.finish_reason = FinishReason::length;
        else
            result.finish_reason = FinishReason::error;

        if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
            choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
            for (const auto& item : choice["logprobs"]["content"]) {
                double lp;
                if (item.contains("logprob") && item["logprob"].is_number()) {
                    lp = item["logprob"].get<double>();
                } else if (item.contains("top_logprobs") && item["top_logprobs"].is_array() &&
                           !item["top_logprobs"].empty()) {
                    lp = -std::numeric_limits<double>::infinity();
                    for (const auto& alt : item["top_logprobs"])
                        lp = std::max(lp, alt.at("logprob").get<double>());
                    result.logprobs_estimated = true;
                } else {
                    continue;
                }
                result.token_logprobs.push_back(std::min(lp, 0.0));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("chat response: malformed payload: ") + e.what());
    }
    return result;
}

inline nlohmann::json build_embedding_request(const std::string& model, const std::string& text) {
    return nlohmann::json{{"model", model}, {"input", text}};
}

inline EmbeddingVector parse_embedding_response(const nlohmann::json& payload) {
    try {
        const auto& data = payload.at("data");
        if (!data.is_array() || data.empty())
            throw ProtocolError("embedding response: empty data");
        EmbeddingVector v;
        for (const auto& x : data[0].at("embedding"))
            v.values.push_back(x.get<double>());
        if (v.values.empty())
            throw ProtocolError("embedding response: empty vector");
        return v;
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("embedding response: malformed payload: ") + e.what());
    }
}

// Wire client for OpenAI-compatible endpoints. Retries transport-level
// failures (connect errors, timeouts, 5xx, 429, 408) with exponential
// backoff, at most `max_attempts` tries. Safe for concurrent calls: every
// request uses its own connection.
class HttpBackend final : public LlmBackend {
public:
    explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
        if (config_.embedding_model.empty())
            config_.embedding_model = config_.model;
        split_url(config_.base_url, host_, path_prefix_);
    }

    GenerationResult generate(const std::string& system_prompt,
                              const std::string& user_prompt,
                              const DecodingConfig& cfg) override {
        cfg.validate();
        if (system_prompt.empty() || user_prompt.empty())
            throw InvalidInputError("generate: empty prompt");
        const auto body = build_chat_request(config_.model, system_prompt, user_prompt, cfg);
        const auto payload = post_json(path_prefix_ + "/chat/completions", body);
        return parse_chat_response(payload);
    }

    EmbeddingVector embed(const std::string& text) override {
        if (text.empty())
            throw InvalidInputError("embed: empty text");
        const auto body = build_embedding_request(config_.embedding_model, text);
        const auto payload = post_json(path_prefix_ + "/embeddings", body);
        EmbeddingVector v = parse_embedding_response(payload);
        std::size_t expected = dimension_.load();
        if (expected == 0)
            dimension_.store(v.dimension());
        else if (v.dimension() != expected)
            throw ProtocolError("embedding response: dimension changed mid-run");
        return v;
    }

    std::size_t embedding_dimension() const override { return dimension_.load(); }

    // Cheap reachability check used by the CLI at startup.
    bool reachable() const {
        httplib::Client client(host_);
        client.set_connection_timeout(5, 0);
        auto res = client.Get((path_prefix_ + "/models").c_str());
        return res != nullptr;
    }

private:
    static void split_url(const std::string& url, std::string& host, std::string& prefix) {
        const auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos)
            throw InvalidInputError("backend url must start with http:// or https://");
        const auto path_start = url.find('/', scheme_end + 3);
        if (path_start == std::string::npos) {
            host = url;
            prefix.clear();
        } else {
            host = url.substr(0, path_start);
            prefix = url.substr(path_start);
            while (!prefix.empty() && prefix.back() == '/')
                prefix.pop_back();
        }
    }

    static bool retryable_status(int status) {
        return status >= 500 || status == 429 || status == 408;
    }

    nlohmann::json post_json(const std::string& path, const nlohmann::json& body) const {
        const std::string payload = body.dump();
        std::string last_error;
        for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
            httplib::Client client(host_);
            client.set_connection_timeout(config_.timeout_sec, 0);
            client.set_read_timeout(config_.timeout_sec, 0);
            httplib::Headers headers;
            if (!config_.api_key.empty())
                headers.emplace("Authorization", "Bearer " + config_.api_key);

            auto res = client.Post(path.c_str(), headers, payload, "application/json");
            if (!res) {
                last_error = "connection failed (" + httplib::to_string(res.error()) + ")";
            } else if (res->status == 200) {
                try {
                    return nlohmann::json::parse(res->body);
                } catch (const nlohmann::json::exception& e) {
                    throw ProtocolError(std::string("backend returned invalid JSON: ") + e.what());
                }
            } else if (retryable_status(res->status)) {
                last_error = "HTTP " + std::to_string(res->status);
            } else {
                throw_client_error(res->status, res->body);
            }
            if (attempt < config_.max_attempts) {
                const auto delay = config_.backoff_base_ms * (1 << (attempt - 1));
                std::this_thread::sleep_for(std::chrono::milliseconds(delay));
            }
        }
        throw TransportError("backend unreachable after " + std::to_string(config_.max_attempts) +
                                 " attempts: " + last_error,
                             config_.max_attempts);
    }

    [[noreturn]] static void throw_client_error(int status, const std::string& body) {
        std::string lowered(body);
        std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (status == 400 && (lowered.find("context length") != std::string::npos ||
                              lowered.find("context_length") != std::string::npos ||
                              lowered.find("context window") != std::string::npos ||
                              lowered.find("maximum context") != std::string::npos)) {
            throw ContextOverflowError("backend rejected prompt: context length exceeded",
                                       largest_integer(body));
        }
        throw ProtocolError("backend rejected request: HTTP " + std::to_string(status) + ": " +
                            body.substr(0, 512));
    }

    // Best-effort token count from a backend error message.
    static std::size_t largest_integer(const std::string& text) {
        std::size_t best = 0;
        std::size_t i = 0;
        while (i < text.size()) {
            if (std::isdigit(static_cast<unsigned char>(text[i]))) {
                std::size_t value = 0;
                while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
                    value = value * 10 + static_cast<std::size_t>(text[i] - '0');
                    ++i;
                }
                best = std::max(best, value);
            } else {
                ++i;
            }
        }
        return best;
    }

    HttpBackendConfig config_;
    std::string host_;
    std::string path_prefix_;
    std::atomic<std::size_t> dimension_{0};
};

}  // namespace ruleloop
