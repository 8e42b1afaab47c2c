// Command-line front end: loads a run configuration and a JSONL dataset,
// streams the queries through the pipeline against a simulated or
// OpenAI-compatible HTTP backend, and writes report.json, per_query.csv and
// the rule journal into the output directory.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>

#include "CLI11.hpp"

#include "ruleloop/config.hpp"
#include "ruleloop/dataset.hpp"
#include "ruleloop/http_backend.hpp"
#include "ruleloop/pipeline.hpp"
#include "ruleloop/report.hpp"
#include "ruleloop/sim_backend.hpp"

namespace {

struct CliOverrides {
    std::string regime;
    int n = -1;
    long long k = -1;
    long long capacity = -1;
    bool no_memory = false;
    bool no_timings = false;
    long long seed = -1;
    std::string out_dir;
};

// Flags beat the config file, which beats defaults.
void apply_overrides(ruleloop::RunConfig& config, const CliOverrides& o) {
    if (!o.regime.empty()) config.regime = ruleloop::parse_regime(o.regime);
    if (o.n >= 0) config.n = o.n;
    if (o.k >= 0) config.k = static_cast<std::size_t>(o.k);
    if (o.capacity >= 0) config.capacity = static_cast<std::size_t>(o.capacity);
    if (o.seed >= 0) config.seed = static_cast<std::uint64_t>(o.seed);
    if (!o.out_dir.empty()) config.out_dir = o.out_dir;
    if (o.no_memory) config.memory = false;
    if (o.no_timings) config.timings = false;
}

std::string api_key_from_env() {
    if (const char* key = std::getenv("RULELOOP_API_KEY")) return key;
    if (const char* key = std::getenv("OPENAI_API_KEY")) return key;
    return {};
}

int run_command(const std::string& config_path, const std::string& dataset_path,
                const CliOverrides& overrides) {
    using namespace ruleloop;

    RunConfig config = load_run_config(config_path);
    apply_overrides(config, overrides);
    if (!config.memory)
        config.k = 0;  // zero-shot-with-anchor baseline: nothing retrieved, nothing stored
    config.validate();

    const auto dataset = load_dataset(dataset_path);
    if (dataset.empty()) {
        std::cerr << "error: dataset " << dataset_path << " contains no records\n";
        return 2;
    }

    AgentSet agents = default_profiles(config.regime);
    if (!config.profile_overrides.empty())
        apply_profile_overrides(agents, config.profile_overrides);

    std::unique_ptr<LlmBackend> backend;
    if (config.backend.kind == "sim") {
        SimScript script = SimScript::from_file(config.backend.script_path);
        if (overrides.seed >= 0 || config.seed != 0)
            script.seed = config.seed;
        auto sim = std::make_unique<SimBackend>(std::move(script));
        register_sim_roles(*sim, agents);
        backend = std::move(sim);
    } else {
        HttpBackendConfig http;
        http.base_url = config.backend.endpoint;
        http.model = config.backend.model;
        http.embedding_model = config.backend.embedding_model;
        http.api_key = api_key_from_env();
        auto client = std::make_unique<HttpBackend>(http);
        if (!client->reachable()) {
            std::cerr << "error: backend " << config.backend.endpoint
                      << " is unreachable; check the endpoint and network\n";
            return 2;
        }
        backend = std::move(client);
    }

    std::filesystem::create_directories(config.out_dir);
    RuleRepository repository(config.capacity);
    repository.attach_journal(config.out_dir + "/rules.jsonl");

    PipelineConfig pipeline_config;
    pipeline_config.regime = config.regime;
    pipeline_config.n_variants = config.n;
    pipeline_config.k_retrieve = config.memory ? config.k : 0;
    pipeline_config.token_budget = config.token_budget;
    pipeline_config.memory_enabled = config.memory;
    pipeline_config.answer_tolerance = config.tolerance;

    Pipeline pipeline(*backend, agents, repository, pipeline_config);
    StreamReport report = pipeline.run_stream(dataset);
    write_report_files(config.out_dir, report, run_config_to_json(config), config.timings);

    std::cout << "queries: " << report.records.size() << "\n";
    if (report.metric) {
        std::cout << metric_name_str(report.metric->metric_name) << ": "
                  << report.metric->aggregate << "\n";
    } else {
        std::cout << "metrics: skipped (dataset has no complete references)\n";
    }
    std::cout << "rules emitted: " << report.rules_emitted_total
              << " (repository: " << repository.size(Polarity::positive) << " positive, "
              << repository.size(Polarity::negative) << " negative)\n"
              << "answers: " << report.positive_selected_count << " positive-selected, "
              << report.teacher_fallback_count << " teacher-fallback\n"
              << "report: " << config.out_dir << "/report.json\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online rule-distilling inference wrapper for frozen LLMs"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Process a query stream and write reports");
    std::string config_path, dataset_path;
    CliOverrides overrides;
    run->add_option("--config", config_path, "Run configuration (JSON)")->required();
    run->add_option("--dataset", dataset_path, "Query stream (JSONL)")->required();
    run->add_option("--regime", overrides.regime, "Task regime: crt or oet")
        ->check(CLI::IsMember({"crt", "oet"}));
    run->add_option("--n", overrides.n, "Student samples per query");
    run->add_option("--k", overrides.k, "Retrieved rules per polarity");
    run->add_option("--capacity", overrides.capacity, "Repository capacity per polarity");
    run->add_flag("--no-memory", overrides.no_memory,
                  "Disable retrieval and rule distillation (baseline mode)");
    run->add_option("--seed", overrides.seed, "Simulator seed override");
    run->add_option("--out", overrides.out_dir, "Output directory");
    run->add_flag("--no-timings", overrides.no_timings,
                  "Omit wall-clock timings from the report (byte-reproducible output)");

    CLI11_PARSE(app, argc, argv);

    try {
        return run_command(config_path, dataset_path, overrides);
    } catch (const ruleloop::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
}
