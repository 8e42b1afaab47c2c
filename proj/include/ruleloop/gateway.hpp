#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ruleloop/errors.hpp"

namespace ruleloop {

// Decoding parameters for one generation call. temperature 0 means greedy
// decoding.
struct DecodingConfig {
    double temperature = 0.0;
    double top_p = 1.0;
    int max_tokens = 1024;
    bool request_logprobs = false;
    std::optional<std::uint64_t> seed;

    void validate() const {
        if (temperature < 0.0)
            throw InvalidInputError("DecodingConfig: temperature < 0");
        if (!(top_p > 0.0 && top_p <= 1.0))
            throw InvalidInputError("DecodingConfig: top_p outside (0,1]");
        if (max_tokens < 1)
            throw InvalidInputError("DecodingConfig: max_tokens < 1");
    }
};

enum class FinishReason { stop, length, error };

inline const char* finish_reason_name(FinishReason r) {
    switch (r) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        case FinishReason::error: return "error";
    }
    return "error";
}

struct GenerationResult {
    std::string text;
    // Natural-log probabilities, one per generated token, each <= 0.
    std::vector<double> token_logprobs;
    FinishReason finish_reason = FinishReason::stop;
    // True when the scores above are best-effort estimates (e.g. read off
    // top-k alternatives) rather than exact chosen-token logprobs.
    bool logprobs_estimated = false;
};

struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dimension() const noexcept { return values.size(); }
};

// cos() of two embeddings; 0 for degenerate (zero-norm) inputs.
inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dimension() != b.dimension())
        throw InternalError("cosine_similarity: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 || nb == 0.0)
        return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Uniform access to a text-generation plus embedding backend.
// Implementations must tolerate concurrent calls from multiple in-flight
// requests; each call is independent.
class LlmBackend {
public:
    virtual ~LlmBackend() = default;

    virtual GenerationResult generate(const std::string& system_prompt,
                                      const std::string& user_prompt,
                                      const DecodingConfig& cfg) = 0;

    // Deterministic per backend instance: the same text yields the same
    // vector within one run.
    virtual EmbeddingVector embed(const std::string& text) = 0;

    // 0 when not yet known (HTTP backends learn it from the first call).
    virtual std::size_t embedding_dimension() const = 0;
};

}  // namespace ruleloop
