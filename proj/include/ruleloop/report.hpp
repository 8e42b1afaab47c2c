#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "ruleloop/metrics.hpp"
#include "ruleloop/pipeline.hpp"

namespace ruleloop {

// Report JSON: the effective config, per-query records, and aggregate
// metrics. Wall-clock timing fields are optional so that reports can be
// compared byte-for-byte across reruns (timings are the one thing a fixed
// seed cannot pin down).
inline nlohmann::json report_to_json(const StreamReport& report,
                                     const nlohmann::json& config_echo,
                                     bool include_timings = true) {
    nlohmann::json records = nlohmann::json::array();
    for (const QueryRecord& r : report.records) {
        nlohmann::json jr{
            {"id", r.id},
            {"query", r.query},
            {"answer", r.answer},
            {"answer_source", answer_source_name(r.source)},
            {"partition", r.partition_outcome},
            {"rules_retrieved", r.rules_retrieved},
            {"rules_emitted", r.rules_emitted},
        };
        if (!r.error.empty())
            jr["error"] = r.error;
        if (include_timings) {
            jr["timings_ms"] = {{"retrieve", r.timings.retrieve_ms},
                                {"tutor", r.timings.tutor_ms},
                                {"generate", r.timings.generate_ms},
                                {"total", r.timings.total_ms}};
        }
        records.push_back(std::move(jr));
    }

    nlohmann::json j{
        {"config", config_echo},
        {"records", std::move(records)},
        {"counts",
         {{"positive_selected", report.positive_selected_count},
          {"teacher_fallback", report.teacher_fallback_count},
          {"rules_emitted", report.rules_emitted_total},
          {"errors", report.queries_with_errors}}},
    };
    if (report.metric) {
        j["metrics"] = {{"name", metric_name_str(report.metric->metric_name)},
                        {"aggregate", report.metric->aggregate},
                        {"per_query", report.metric->per_query}};
    }
    return j;
}

// Flat per-query CSV; the score column is empty when no metrics were
// computed.
inline std::string report_to_csv(const StreamReport& report) {
    std::string out = "id,score,answer_source,partition,rules_retrieved,rules_emitted\n";
    char score_buf[32];
    for (std::size_t i = 0; i < report.records.size(); ++i) {
        const QueryRecord& r = report.records[i];
        std::string score;
        if (report.metric && i < report.metric->per_query.size()) {
            std::snprintf(score_buf, sizeof(score_buf), "%.6f", report.metric->per_query[i]);
            score = score_buf;
        }
        out += r.id + "," + score + "," + answer_source_name(r.source) + "," +
               r.partition_outcome + "," + std::to_string(r.rules_retrieved.size()) + "," +
               std::to_string(r.rules_emitted.size()) + "\n";
    }
    return out;
}

// Writes report.json and per_query.csv into `dir` (created if needed).
inline void write_report_files(const std::string& dir, const StreamReport& report,
                               const nlohmann::json& config_echo, bool include_timings = true) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir + "/report.json");
        if (!out)
            throw InvalidInputError("cannot write " + dir + "/report.json");
        out << report_to_json(report, config_echo, include_timings).dump(2) << '\n';
    }
    {
        std::ofstream out(dir + "/per_query.csv");
        if (!out)
            throw InvalidInputError("cannot write " + dir + "/per_query.csv");
        out << report_to_csv(report);
    }
}

}  // namespace ruleloop
