// Optional, non-gating live smoke run against a real OpenAI-compatible
// endpoint. Needs network access plus:
//   RULELOOP_LIVE_ENDPOINT  e.g. https://api.example.com/v1
//   RULELOOP_LIVE_MODEL     chat model id
//   RULELOOP_LIVE_EMBED     embedding model id (defaults to the chat model)
//   RULELOOP_API_KEY        credential, if the endpoint wants one
//
// Streams 20 arithmetic questions twice (memory on, then off) and checks
// that at least one rule was emitted and that the memory run scores at
// least as well as the baseline. Never wired into ctest.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "ruleloop/http_backend.hpp"
#include "ruleloop/pipeline.hpp"

using namespace ruleloop;

int main() {
    const char* endpoint = std::getenv("RULELOOP_LIVE_ENDPOINT");
    const char* model = std::getenv("RULELOOP_LIVE_MODEL");
    if (!endpoint || !model) {
        std::printf("skipped: set RULELOOP_LIVE_ENDPOINT and RULELOOP_LIVE_MODEL to run\n");
        return 0;
    }

    HttpBackendConfig http;
    http.base_url = endpoint;
    http.model = model;
    if (const char* embed = std::getenv("RULELOOP_LIVE_EMBED")) http.embedding_model = embed;
    if (const char* key = std::getenv("RULELOOP_API_KEY")) http.api_key = key;

    HttpBackend backend(http);
    if (!backend.reachable()) {
        std::printf("FAIL: endpoint %s unreachable\n", endpoint);
        return 1;
    }

    std::vector<StreamItem> dataset;
    for (int i = 1; i <= 20; ++i) {
        const int a = 11 + 3 * i, b = 7 + 2 * i;
        dataset.push_back({"q" + std::to_string(i),
                           "Compute " + std::to_string(a) + " + " + std::to_string(b) +
                               " - " + std::to_string(i) + ".",
                           std::to_string(a + b - i)});
    }

    auto run = [&](bool memory_on) {
        AgentSet agents = default_profiles(TaskRegime::crt);
        RuleRepository repo(1000);
        PipelineConfig config;
        config.memory_enabled = memory_on;
        if (!memory_on) config.k_retrieve = 0;
        Pipeline pipeline(backend, agents, repo, config);
        return pipeline.run_stream(dataset);
    };

    std::printf("running 20-question stream with memory on...\n");
    const auto with_memory = run(true);
    std::printf("running the --no-memory baseline...\n");
    const auto baseline = run(false);

    const double mem_acc = with_memory.metric ? with_memory.metric->aggregate : 0.0;
    const double base_acc = baseline.metric ? baseline.metric->aggregate : 0.0;
    std::printf("accuracy: memory %.3f vs baseline %.3f; rules emitted: %zu\n", mem_acc,
                base_acc, with_memory.rules_emitted_total);

    if (with_memory.rules_emitted_total < 1) {
        std::printf("FAIL: expected at least one emitted rule\n");
        return 1;
    }
    if (mem_acc < base_acc) {
        std::printf("FAIL: memory run scored below the baseline\n");
        return 1;
    }
    std::printf("PASS\n");
    return 0;
}
