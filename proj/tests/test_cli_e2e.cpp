// Exercises the installed CLI binary end to end: report files, flag
// precedence, the --no-memory ablation, and byte-reproducible output.
// The binary path arrives via the RULELOOP_CLI environment variable.

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* path = std::getenv("RULELOOP_CLI");
    REQUIRE_MESSAGE(path != nullptr, "RULELOOP_CLI must point at the built binary");
    return path;
}

int run_cli(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
    return std::system(cmd.c_str());
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE_MESSAGE(in.good(), "missing file: " << path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Workspace {
    fs::path dir;

    Workspace()
        : dir(fs::temp_directory_path() /
              ("ruleloop_cli_test_" + std::to_string(::getpid()))) {
        fs::remove_all(dir);
        fs::create_directories(dir);
        write("script.json", script_json());
        write("dataset.jsonl", dataset_jsonl());
        write("config.json", config_json());
    }
    ~Workspace() { fs::remove_all(dir); }

    void write(const std::string& name, const std::string& content) const {
        std::ofstream out(dir / name);
        out << content;
    }
    std::string path(const std::string& name) const { return (dir / name).string(); }

    // two agreeing queries plus one 3-vs-2 disagreement that emits rules
    static std::string script_json() {
        json entries = json::array();
        auto gen = [&](const std::string& role, const json& match, const std::string& text,
                       const std::vector<double>& lps = {-0.3, -0.2}) {
            entries.push_back(
                {{"role", role}, {"match", match}, {"text", text}, {"token_logprobs", lps}});
        };
        for (int i = 1; i <= 4; ++i) {
            std::string tutor_text;
            for (int v = 1; v <= 4; ++v)
                tutor_text += std::to_string(v) + ". question " + std::to_string(i) + " [v" +
                              std::to_string(v) + "]\n";
            entries.push_back({{"role", "tutor"},
                               {"match", {"question " + std::to_string(i)}},
                               {"text", tutor_text}});
        }
        gen("teacher", {"question 3"}, "\\boxed{33}");
        gen("student", {"question 3", "[v1]"}, "\\boxed{33}");
        gen("student", {"question 3", "[v2]"}, "\\boxed{33}");
        gen("student", {"question 3", "[v3]"}, "\\boxed{99}", {-0.1});
        gen("student", {"question 3", "[v4]"}, "\\boxed{99}", {-0.8});
        entries.push_back({{"role", "summarizer"},
                           {"match", {"question 3"}},
                           {"text", "DO: verify the operands.\nAVOID: inventing totals."}});
        gen("any", {"question 1"}, "\\boxed{11}");
        gen("any", {"question 2"}, "\\boxed{22}");
        gen("any", {"question 4"}, "\\boxed{44}");
        return json{{"seed", 11}, {"entries", entries}}.dump(2);
    }

    static std::string dataset_jsonl() {
        std::string out;
        for (int i = 1; i <= 4; ++i) {
            out += json{{"id", "q" + std::to_string(i)},
                        {"query", "question " + std::to_string(i)},
                        {"reference", std::to_string(11 * i)}}
                       .dump() +
                   "\n";
        }
        return out;
    }

    std::string config_json() const {
        return json{{"backend", {{"kind", "sim"}, {"script", path("script.json")}}},
                    {"regime", "crt"},
                    {"n", 4},
                    {"k", 30},
                    {"capacity", 100}}
            .dump(2);
    }
};

}  // namespace

TEST_CASE("a full run writes report, csv and journal, and scores the stream") {
    Workspace ws;
    const std::string out = ws.path("out1");
    REQUIRE(run_cli("run --config " + ws.path("config.json") + " --dataset " +
                    ws.path("dataset.jsonl") + " --out " + out) == 0);

    const json report = json::parse(slurp(out + "/report.json"));
    CHECK(report["records"].size() == 4);
    CHECK(report["metrics"]["name"] == "exact_match_accuracy");
    CHECK(report["metrics"]["aggregate"] == doctest::Approx(1.0));
    CHECK(report["counts"]["rules_emitted"] == 2);

    const std::string csv = slurp(out + "/per_query.csv");
    CHECK(csv.find("id,score,answer_source,partition") == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + 4 rows

    const std::string journal = slurp(out + "/rules.jsonl");
    CHECK(std::count(journal.begin(), journal.end(), '\n') == 2);
    CHECK(journal.find("verify the operands") != std::string::npos);
}

TEST_CASE("--no-memory forces k to 0 and disables rule emission") {
    Workspace ws;
    const std::string out = ws.path("out_nm");
    REQUIRE(run_cli("run --config " + ws.path("config.json") + " --dataset " +
                    ws.path("dataset.jsonl") + " --no-memory --out " + out) == 0);

    const json report = json::parse(slurp(out + "/report.json"));
    CHECK(report["counts"]["rules_emitted"] == 0);
    CHECK(report["config"]["k"] == 0);
    CHECK(report["config"]["memory"] == false);
    for (const auto& rec : report["records"]) {
        CHECK(rec["rules_retrieved"].empty());
        CHECK(rec["rules_emitted"].empty());
    }
    // answers still scored; the disagreement query is still answered by majority
    CHECK(report["metrics"]["aggregate"] == doctest::Approx(1.0));
}

TEST_CASE("command-line flags override config-file values") {
    Workspace ws;
    const std::string out = ws.path("out_flags");
    REQUIRE(run_cli("run --config " + ws.path("config.json") + " --dataset " +
                    ws.path("dataset.jsonl") +
                    " --regime oet --n 2 --k 7 --capacity 9 --seed 5 --out " + out) == 0);

    const json report = json::parse(slurp(out + "/report.json"));
    CHECK(report["config"]["regime"] == "oet");  // flag beats the file's crt
    CHECK(report["config"]["n"] == 2);
    CHECK(report["config"]["k"] == 7);
    CHECK(report["config"]["capacity"] == 9);
    CHECK(report["config"]["seed"] == 5);
    CHECK(report["config"]["out"] == out);
}

TEST_CASE("reports without references omit the metrics section") {
    Workspace ws;
    ws.write("noref.jsonl", R"({"id": "a", "query": "question 1"}
{"id": "b", "query": "question 2"}
)");
    const std::string out = ws.path("out_noref");
    REQUIRE(run_cli("run --config " + ws.path("config.json") + " --dataset " +
                    ws.path("noref.jsonl") + " --out " + out) == 0);
    const json report = json::parse(slurp(out + "/report.json"));
    CHECK_FALSE(report.contains("metrics"));
    CHECK(report["records"].size() == 2);
}

TEST_CASE("fixed seed and --no-timings give byte-identical reports") {
    Workspace ws;
    const std::string base = "run --config " + ws.path("config.json") + " --dataset " +
                             ws.path("dataset.jsonl") + " --seed 3 --no-timings --out ";
    REQUIRE(run_cli(base + ws.path("outA")) == 0);
    REQUIRE(run_cli(base + ws.path("outB")) == 0);
    // the config echo differs only in the out dir; compare with it patched
    json a = json::parse(slurp(ws.path("outA") + "/report.json"));
    json b = json::parse(slurp(ws.path("outB") + "/report.json"));
    a["config"].erase("out");
    b["config"].erase("out");
    CHECK(a.dump() == b.dump());
    CHECK(slurp(ws.path("outA") + "/per_query.csv") ==
          slurp(ws.path("outB") + "/per_query.csv"));
}

TEST_CASE("malformed dataset lines abort with a nonzero exit") {
    Workspace ws;
    ws.write("bad.jsonl", "{\"id\": \"a\"}\n");
    CHECK(run_cli("run --config " + ws.path("config.json") + " --dataset " + ws.path("bad.jsonl") +
                  " --out " + ws.path("out_bad")) != 0);
}

TEST_CASE("unreachable http backend fails fast with a nonzero exit") {
    Workspace ws;
    ws.write("http_config.json",
             json{{"backend",
                   {{"kind", "http"}, {"endpoint", "http://127.0.0.1:1/v1"}, {"model", "m"}}}}
                 .dump());
    CHECK(run_cli("run --config " + ws.path("http_config.json") + " --dataset " +
                  ws.path("dataset.jsonl") + " --out " + ws.path("out_http")) != 0);
}
