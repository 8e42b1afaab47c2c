#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>

#include "json.hpp"

#include "ruleloop/agents.hpp"
#include "ruleloop/errors.hpp"

namespace ruleloop {

struct BackendSpec {
    std::string kind = "sim";  // "sim" | "http"
    std::string script_path;   // sim
    std::string endpoint;      // http
    std::string model;         // http
    std::string embedding_model;  // http, defaults to model
};

// Everything a run needs. Precedence: command-line flags override
// config-file values, which override these defaults. The API credential is
// taken from the environment only, never from this file.
struct RunConfig {
    BackendSpec backend;
    TaskRegime regime = TaskRegime::crt;
    int n = 4;
    std::size_t k = 30;
    std::size_t capacity = 1000;
    std::size_t token_budget = 4096;
    double tolerance = 1e-4;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool memory = true;
    bool timings = true;  // include wall-clock fields in the report
    nlohmann::json profile_overrides = nlohmann::json::object();

    void validate() const {
        if (n < 1) throw InvalidInputError("config: n must be >= 1");
        if (capacity < 1) throw InvalidInputError("config: capacity must be >= 1");
        if (backend.kind != "sim" && backend.kind != "http")
            throw InvalidInputError("config: backend.kind must be 'sim' or 'http'");
        if (backend.kind == "sim" && backend.script_path.empty())
            throw InvalidInputError("config: sim backend requires backend.script");
        if (backend.kind == "http" && (backend.endpoint.empty() || backend.model.empty()))
            throw InvalidInputError("config: http backend requires backend.endpoint and backend.model");
    }
};

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    if (j.contains("backend")) {
        const auto& b = j["backend"];
        c.backend.kind = b.value("kind", "sim");
        c.backend.script_path = b.value("script", "");
        c.backend.endpoint = b.value("endpoint", "");
        c.backend.model = b.value("model", "");
        c.backend.embedding_model = b.value("embedding_model", "");
    }
    if (j.contains("regime")) c.regime = parse_regime(j["regime"].get<std::string>());
    c.n = j.value("n", c.n);
    c.k = j.value("k", c.k);
    c.capacity = j.value("capacity", c.capacity);
    c.token_budget = j.value("token_budget", c.token_budget);
    c.tolerance = j.value("tolerance", c.tolerance);
    c.out_dir = j.value("out", c.out_dir);
    c.seed = j.value("seed", c.seed);
    c.memory = j.value("memory", c.memory);
    c.timings = j.value("timings", c.timings);
    if (j.contains("profiles")) c.profile_overrides = j["profiles"];
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw InvalidInputError("config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInputError("config: invalid JSON in " + path + ": " + e.what());
    }
    return run_config_from_json(j);
}

// Echo of the effective settings, written into the report for
// reproducibility.
inline nlohmann::json run_config_to_json(const RunConfig& c) {
    return nlohmann::json{
        {"backend",
         {{"kind", c.backend.kind},
          {"script", c.backend.script_path},
          {"endpoint", c.backend.endpoint},
          {"model", c.backend.model},
          {"embedding_model", c.backend.embedding_model}}},
        {"regime", regime_name(c.regime)},
        {"n", c.n},
        {"k", c.k},
        {"capacity", c.capacity},
        {"token_budget", c.token_budget},
        {"tolerance", c.tolerance},
        {"out", c.out_dir},
        {"seed", c.seed},
        {"memory", c.memory},
        {"timings", c.timings},
    };
}

}  // namespace ruleloop
