#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "ruleloop/agents.hpp"
#include "ruleloop/answer.hpp"
#include "ruleloop/errors.hpp"

namespace ruleloop {

enum class MetricName { exact_match_accuracy, rouge_lsum_f1 };

inline const char* metric_name_str(MetricName m) {
    return m == MetricName::exact_match_accuracy ? "exact_match_accuracy" : "rouge_lsum_f1";
}

struct MetricResult {
    std::vector<double> per_query;
    double aggregate = 0.0;
    MetricName metric_name = MetricName::exact_match_accuracy;
};

// 1 iff the extracted final answers are equivalent under normalization and
// the numeric tolerance shared with the distillation clustering.
inline int exact_match(const std::string& prediction, const std::string& reference,
                       double rel_tol = 1e-4) {
    return answers_equivalent(extract_answer(prediction), extract_answer(reference), rel_tol) ? 1
                                                                                              : 0;
}

// Sentence boundaries: '.', '?' or '!' followed by whitespace (or end of
// text), plus hard newlines.
inline std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> out;
    std::string current;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\n') {
            if (!current.empty()) out.push_back(current);
            current.clear();
            continue;
        }
        current.push_back(c);
        if ((c == '.' || c == '?' || c == '!') &&
            (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])))) {
            out.push_back(current);
            current.clear();
        }
    }
    if (!current.empty()) out.push_back(current);
    return out;
}

// Lowercase alphanumeric word tokens.
inline std::vector<std::string> tokenize_words(const std::string& text) {
    std::vector<std::string> out;
    std::string word;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!word.empty()) {
            out.push_back(word);
            word.clear();
        }
    }
    if (!word.empty()) out.push_back(word);
    return out;
}

namespace detail {

// Marks the reference-token positions touched by one canonical LCS alignment
// of ref vs pred. Backtrack rule: diagonal on equal tokens, otherwise drop a
// reference token when dp[i-1][j] >= dp[i][j-1], else a prediction token.
inline void mark_lcs_positions(const std::vector<std::string>& ref,
                               const std::vector<std::string>& pred,
                               std::vector<char>& marked) {
    const std::size_t n = ref.size(), m = pred.size();
    if (n == 0 || m == 0) return;
    std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j)
            dp[i][j] = ref[i - 1] == pred[j - 1] ? dp[i - 1][j - 1] + 1
                                                 : std::max(dp[i - 1][j], dp[i][j - 1]);
    std::size_t i = n, j = m;
    while (i > 0 && j > 0) {
        if (ref[i - 1] == pred[j - 1]) {
            marked[i - 1] = 1;
            --i;
            --j;
        } else if (dp[i - 1][j] >= dp[i][j - 1]) {
            --i;
        } else {
            --j;
        }
    }
}

}  // namespace detail

// Summary-level ROUGE-L: for every reference sentence, the union of its LCS
// matches against each prediction sentence (each reference token position
// counted at most once). A match is then scored only while both texts still
// have an unconsumed occurrence of that token, which keeps precision and
// recall within [0,1] even when sentences repeat material. Recall is over
// reference tokens, precision over prediction tokens, F1 with 0 when both
// are 0.
inline double rouge_lsum(const std::string& prediction, const std::string& reference) {
    std::vector<std::vector<std::string>> pred_sents, ref_sents;
    for (const std::string& s : split_sentences(prediction)) {
        auto toks = tokenize_words(s);
        if (!toks.empty()) pred_sents.push_back(std::move(toks));
    }
    for (const std::string& s : split_sentences(reference)) {
        auto toks = tokenize_words(s);
        if (!toks.empty()) ref_sents.push_back(std::move(toks));
    }

    std::size_t total_ref = 0, total_pred = 0, matched = 0;
    std::unordered_map<std::string, std::size_t> ref_pool, pred_pool;
    for (const auto& s : ref_sents) {
        total_ref += s.size();
        for (const auto& t : s) ++ref_pool[t];
    }
    for (const auto& s : pred_sents) {
        total_pred += s.size();
        for (const auto& t : s) ++pred_pool[t];
    }
    if (total_ref == 0 || total_pred == 0)
        return 0.0;

    for (const auto& ref : ref_sents) {
        std::vector<char> marked(ref.size(), 0);
        for (const auto& pred : pred_sents)
            detail::mark_lcs_positions(ref, pred, marked);
        for (std::size_t p = 0; p < ref.size(); ++p) {
            if (!marked[p]) continue;
            auto& r = ref_pool[ref[p]];
            auto& c = pred_pool[ref[p]];
            if (r > 0 && c > 0) {
                ++matched;
                --r;
                --c;
            }
        }
    }

    const double recall = static_cast<double>(matched) / static_cast<double>(total_ref);
    const double precision = static_cast<double>(matched) / static_cast<double>(total_pred);
    if (recall == 0.0 && precision == 0.0)
        return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

// Per-query scores in stream order plus their mean: exact match for CRT,
// ROUGE-Lsum for OET.
inline MetricResult aggregate(const std::vector<std::string>& predictions,
                              const std::vector<std::string>& references, TaskRegime regime,
                              double rel_tol = 1e-4) {
    if (predictions.empty())
        throw InvalidInputError("aggregate: empty stream");
    if (predictions.size() != references.size())
        throw InvalidInputError("aggregate: predictions/references length mismatch");

    MetricResult result;
    result.metric_name = regime == TaskRegime::crt ? MetricName::exact_match_accuracy
                                                   : MetricName::rouge_lsum_f1;
    result.per_query.reserve(predictions.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double score = regime == TaskRegime::crt
                                 ? exact_match(predictions[i], references[i], rel_tol)
                                 : rouge_lsum(predictions[i], references[i]);
        result.per_query.push_back(score);
        sum += score;
    }
    result.aggregate = sum / static_cast<double>(predictions.size());
    return result;
}

}  // namespace ruleloop
