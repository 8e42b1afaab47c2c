#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ruleloop/answer.hpp"
#include "ruleloop/gateway.hpp"
#include "ruleloop/perplexity.hpp"

namespace ruleloop {

// Who produced a candidate. Stable ordering is teacher first, then students
// by index; ties everywhere in the library break on this order.
struct CandidateSource {
    enum class Kind { teacher, student };
    Kind kind = Kind::teacher;
    int index = 0;  // 1..N for students, 0 for the teacher

    static CandidateSource teacher() { return {Kind::teacher, 0}; }
    static CandidateSource student(int i) { return {Kind::student, i}; }

    int order_key() const noexcept { return kind == Kind::teacher ? 0 : index; }

    std::string label() const {
        return kind == Kind::teacher ? "teacher" : "student(" + std::to_string(index) + ")";
    }

    bool operator==(const CandidateSource&) const = default;
};

// One model response under consideration. `answer` is populated in the CRT
// regime, `embedding` in the OET regime (once, by the pipeline).
struct Candidate {
    std::string text;
    CandidateSource source;
    PerplexityScore perplexity = PerplexityScore::unavailable();
    std::optional<NormalizedAnswer> answer;
    std::optional<EmbeddingVector> embedding;
};

// Candidates for one query, teacher first, in stable order. Duplicate texts
// keep their distinct identities.
struct CandidateSet {
    std::vector<Candidate> items;

    std::size_t size() const noexcept { return items.size(); }
    bool empty() const noexcept { return items.empty(); }
};

// PPL from a generation result: the +inf sentinel when the backend supplied
// no scores, the estimated variant when scores are flagged best-effort.
inline PerplexityScore perplexity_from(const GenerationResult& gen) {
    if (gen.token_logprobs.empty())
        return PerplexityScore::unavailable();
    if (gen.logprobs_estimated) {
        std::vector<ScoredToken> scored;
        scored.reserve(gen.token_logprobs.size());
        for (double lp : gen.token_logprobs)
            scored.push_back({lp, false});
        return estimated_perplexity(scored);
    }
    return sequence_perplexity(gen.token_logprobs);
}

}  // namespace ruleloop
