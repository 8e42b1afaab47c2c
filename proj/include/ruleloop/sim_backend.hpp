#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ruleloop/gateway.hpp"
#include "ruleloop/hash.hpp"

namespace ruleloop {

// One scripted response. An entry applies when the role matches (or is
// "any"), the prompt digest matches if given, every `match` substring occurs
// in the user prompt, and no `not_match` substring does. The first applicable
// entry in file order wins.
struct SimEntry {
    std::string role = "any";
    std::vector<std::string> match;
    std::vector<std::string> not_match;
    std::optional<std::string> prompt_digest;  // fnv1a64 hex of the user prompt
    std::string text;
    std::vector<double> token_logprobs;
    std::optional<int> delay_ms;
    bool fail = false;  // simulate a transport failure instead of answering
};

struct SimScript {
    std::vector<SimEntry> entries;
    // Exact-text embedding overrides; anything else falls back to the
    // hash-seeded construction documented at SimBackend::embed.
    std::unordered_map<std::string, std::vector<double>> embeddings;
    int default_delay_ms = 0;
    int embed_delay_ms = 0;
    std::size_t embedding_dimension = 64;
    std::uint64_t seed = 0;

    static SimScript from_json(const nlohmann::json& j) {
        SimScript s;
        s.default_delay_ms = j.value("default_delay_ms", 0);
        s.embed_delay_ms = j.value("embed_delay_ms", 0);
        s.embedding_dimension = j.value("embedding_dimension", std::size_t{64});
        s.seed = j.value("seed", std::uint64_t{0});
        if (s.embedding_dimension == 0)
            throw InvalidInputError("sim script: embedding_dimension must be positive");
        for (const auto& je : j.value("entries", nlohmann::json::array())) {
            SimEntry e;
            e.role = je.value("role", "any");
            for (const auto& m : je.value("match", nlohmann::json::array()))
                e.match.push_back(m.get<std::string>());
            for (const auto& m : je.value("not_match", nlohmann::json::array()))
                e.not_match.push_back(m.get<std::string>());
            if (je.contains("prompt_digest"))
                e.prompt_digest = je["prompt_digest"].get<std::string>();
            e.text = je.value("text", "");
            for (const auto& lp : je.value("token_logprobs", nlohmann::json::array())) {
                const double v = lp.get<double>();
                if (v > 0.0)
                    throw InvalidInputError("sim script: token logprob > 0");
                e.token_logprobs.push_back(v);
            }
            if (je.contains("delay_ms"))
                e.delay_ms = je["delay_ms"].get<int>();
            e.fail = je.value("fail", false);
            s.entries.push_back(std::move(e));
        }
        if (j.contains("embeddings")) {
            for (const auto& [text, vec] : j["embeddings"].items()) {
                std::vector<double> v;
                for (const auto& x : vec) v.push_back(x.get<double>());
                if (v.size() != s.embedding_dimension)
                    throw InvalidInputError("sim script: embedding override dimension mismatch");
                s.embeddings.emplace(text, std::move(v));
            }
        }
        return s;
    }

    static SimScript from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in)
            throw InvalidInputError("sim script: cannot open " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw InvalidInputError("sim script: invalid JSON in " + path + ": " + e.what());
        }
        return from_json(j);
    }
};

// One generation call as observed by the simulator; tests use this log to
// audit composed prompts.
struct SimCall {
    std::string role;
    std::string system_prompt;
    std::string user_prompt;
    std::string digest;  // fnv1a64 hex of the user prompt
};

// Deterministic scripted backend. For a fixed script, seed, and registered
// roles, any sequence of generate/embed calls yields byte-identical results
// across runs: every response is a pure function of its own inputs, so
// concurrent call order cannot perturb outputs.
class SimBackend final : public LlmBackend {
public:
    explicit SimBackend(SimScript script = {}) : script_(std::move(script)) {}

    // Roles are resolved by exact system-prompt match; unregistered prompts
    // resolve to "" and only match "any" entries.
    void register_role(std::string role, const std::string& system_prompt) {
        roles_[system_prompt] = std::move(role);
    }

    GenerationResult generate(const std::string& system_prompt,
                              const std::string& user_prompt,
                              const DecodingConfig& cfg) override {
        cfg.validate();
        if (system_prompt.empty() || user_prompt.empty())
            throw InvalidInputError("generate: empty prompt");
        const std::string role = resolve_role(system_prompt);
        const std::string digest = hex64(fnv1a64(user_prompt));
        {
            std::lock_guard lock(log_mutex_);
            log_.push_back({role, system_prompt, user_prompt, digest});
        }

        const SimEntry* entry = find_entry(role, user_prompt, digest);
        const int delay = entry && entry->delay_ms ? *entry->delay_ms : script_.default_delay_ms;
        if (delay > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));

        if (entry && entry->fail)
            throw TransportError("sim: scripted transport failure", 1);

        GenerationResult result;
        if (entry) {
            result.text = entry->text;
            if (cfg.request_logprobs) {
                result.token_logprobs = entry->token_logprobs.empty()
                                            ? fallback_logprobs(entry->text)
                                            : entry->token_logprobs;
            }
        } else {
            result.text = fallback_text(role, user_prompt);
            if (cfg.request_logprobs)
                result.token_logprobs = fallback_logprobs(result.text);
        }
        result.finish_reason = FinishReason::stop;
        result.logprobs_estimated = false;
        return result;
    }

    // Hash-seeded unit vector, or the script's override for that exact text.
    // Construction rule (tests re-derive it): state = seed ^ fnv1a64(text);
    // component i = 2*u_i - 1 with u_i the i-th splitmix64 draw mapped to
    // [0,1); the vector is then normalized to unit length.
    EmbeddingVector embed(const std::string& text) override {
        if (text.empty())
            throw InvalidInputError("embed: empty text");
        if (script_.embed_delay_ms > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(script_.embed_delay_ms));
        if (auto it = script_.embeddings.find(text); it != script_.embeddings.end())
            return EmbeddingVector{it->second};

        std::uint64_t state = script_.seed ^ fnv1a64(text);
        EmbeddingVector v;
        v.values.resize(script_.embedding_dimension);
        double norm_sq = 0.0;
        for (double& x : v.values) {
            x = 2.0 * unit_double(splitmix64(state)) - 1.0;
            norm_sq += x * x;
        }
        if (norm_sq == 0.0) {
            v.values[0] = 1.0;
            return v;
        }
        const double norm = std::sqrt(norm_sq);
        for (double& x : v.values) x /= norm;
        return v;
    }

    std::size_t embedding_dimension() const override { return script_.embedding_dimension; }

    std::vector<SimCall> call_log() const {
        std::lock_guard lock(log_mutex_);
        return log_;
    }

    void clear_call_log() {
        std::lock_guard lock(log_mutex_);
        log_.clear();
    }

private:
    std::string resolve_role(const std::string& system_prompt) const {
        auto it = roles_.find(system_prompt);
        return it == roles_.end() ? std::string{} : it->second;
    }

    const SimEntry* find_entry(const std::string& role,
                               const std::string& user_prompt,
                               const std::string& digest) const {
        for (const SimEntry& e : script_.entries) {
            if (e.role != "any" && e.role != role)
                continue;
            if (e.prompt_digest && *e.prompt_digest != digest)
                continue;
            bool ok = true;
            for (const std::string& m : e.match)
                if (user_prompt.find(m) == std::string::npos) { ok = false; break; }
            if (!ok)
                continue;
            for (const std::string& m : e.not_match)
                if (user_prompt.find(m) != std::string::npos) { ok = false; break; }
            if (ok)
                return &e;
        }
        return nullptr;
    }

    std::string fallback_text(const std::string& role, const std::string& user_prompt) const {
        std::uint64_t state = script_.seed ^ fnv1a64(role) ^ fnv1a64(user_prompt);
        const std::uint64_t tag = splitmix64(state);
        const std::uint64_t number = splitmix64(state) % 97;
        return "Auto response " + hex64(tag).substr(0, 8) + ". The answer is " +
               std::to_string(number) + ".";
    }

    std::vector<double> fallback_logprobs(const std::string& text) const {
        std::uint64_t state = script_.seed ^ fnv1a64(text) ^ 0x5eedf00dull;
        const std::size_t count = 4 + splitmix64(state) % 5;
        std::vector<double> lps(count);
        for (double& lp : lps)
            lp = -0.05 - 1.45 * unit_double(splitmix64(state));
        return lps;
    }

    SimScript script_;
    std::unordered_map<std::string, std::string> roles_;  // system prompt -> role
    mutable std::mutex log_mutex_;
    std::vector<SimCall> log_;
};

}  // namespace ruleloop
