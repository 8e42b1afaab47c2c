#pragma once

#include <cstdint>
#include <string>

#include "ruleloop/gateway.hpp"

namespace ruleloop {

enum class Polarity { positive, negative };

inline const char* polarity_name(Polarity p) {
    return p == Polarity::positive ? "positive" : "negative";
}

// A distilled pair of textual guidelines for one query: guidance (what to
// do) and prohibition (what to avoid).
struct RulePair {
    std::string positive;
    std::string negative;
    std::string source_query;
};

// One stored rule. Ids are strictly increasing in insertion order across
// both polarity sets.
struct Rule {
    std::uint64_t id = 0;
    Polarity polarity = Polarity::positive;
    std::string text;
    EmbeddingVector embedding;
    std::string origin_query;
};

}  // namespace ruleloop
