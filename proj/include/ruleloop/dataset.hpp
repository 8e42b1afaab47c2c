#pragma once

#include <fstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "ruleloop/errors.hpp"
#include "ruleloop/pipeline.hpp"

namespace ruleloop {

// JSONL dataset: one {"id": ..., "query": ..., "reference"?: ...} object per
// line, order preserved. Malformed lines and duplicate ids are reported with
// their line number.
inline std::vector<StreamItem> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw InvalidInputError("dataset: cannot open " + path);

    std::vector<StreamItem> items;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw InvalidInputError("dataset line " + std::to_string(line_no) +
                                    ": invalid JSON: " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j.contains("query"))
            throw InvalidInputError("dataset line " + std::to_string(line_no) +
                                    ": expected an object with 'id' and 'query'");

        StreamItem item;
        item.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
        if (!j["query"].is_string())
            throw InvalidInputError("dataset line " + std::to_string(line_no) +
                                    ": 'query' must be a string");
        item.query = j["query"].get<std::string>();
        if (item.query.empty())
            throw InvalidInputError("dataset line " + std::to_string(line_no) +
                                    ": 'query' must be non-empty");
        if (j.contains("reference")) {
            if (!j["reference"].is_string())
                throw InvalidInputError("dataset line " + std::to_string(line_no) +
                                        ": 'reference' must be a string");
            item.reference = j["reference"].get<std::string>();
        }
        if (!seen_ids.insert(item.id).second)
            throw InvalidInputError("dataset line " + std::to_string(line_no) +
                                    ": duplicate id '" + item.id + "'");
        items.push_back(std::move(item));
    }
    return items;
}

}  // namespace ruleloop
