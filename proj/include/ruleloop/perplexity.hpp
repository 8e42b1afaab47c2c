#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

#include "ruleloop/errors.hpp"

namespace ruleloop {

// Sequence-level perplexity, exp(-mean(token logprobs)), used as the
// model-confidence proxy for candidate selection. `estimated` marks scores
// derived from partial backend probabilities rather than exact per-token
// logprobs.
struct PerplexityScore {
    double value = 1.0;
    std::size_t token_count = 0;
    bool estimated = false;

    // Sentinel for candidates whose backend returned no per-token scores.
    // It compares worse than any computed score, so min-PPL selection stays
    // total. token_count 0 identifies the sentinel.
    static PerplexityScore unavailable() noexcept {
        return {std::numeric_limits<double>::infinity(), 0, true};
    }

    bool available() const noexcept { return std::isfinite(value); }
};

// One per-token score from a backend that may not expose exact logprobs.
struct ScoredToken {
    double logprob = 0.0;
    bool is_exact = true;
};

inline PerplexityScore sequence_perplexity(std::span<const double> token_logprobs) {
    if (token_logprobs.empty())
        throw InvalidInputError("sequence_perplexity: empty logprob sequence");
    double sum = 0.0;
    for (double lp : token_logprobs) {
        if (lp > 0.0)
            throw InvalidInputError("sequence_perplexity: logprob > 0");
        sum += lp;
    }
    const double mean = sum / static_cast<double>(token_logprobs.size());
    return {std::exp(-mean), token_logprobs.size(), false};
}

// Same formula over whatever per-token scores the backend could supply.
// The result is flagged estimated as soon as any entry is inexact.
inline PerplexityScore estimated_perplexity(std::span<const ScoredToken> scores) {
    if (scores.empty())
        throw InvalidInputError("estimated_perplexity: empty score sequence");
    double sum = 0.0;
    bool any_inexact = false;
    for (const ScoredToken& s : scores) {
        if (s.logprob > 0.0)
            throw InvalidInputError("estimated_perplexity: logprob > 0");
        sum += s.logprob;
        any_inexact = any_inexact || !s.is_exact;
    }
    const double mean = sum / static_cast<double>(scores.size());
    return {std::exp(-mean), scores.size(), any_inexact};
}

}  // namespace ruleloop
