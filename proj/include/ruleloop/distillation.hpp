#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ruleloop/agents.hpp"
#include "ruleloop/candidates.hpp"
#include "ruleloop/rules.hpp"

namespace ruleloop {

// Split of a candidate set into positive/negative subsets. `discarded` marks
// CRT queries where every candidate disagreed; no rules are distilled from
// those.
struct Partition {
    enum class Outcome { split, all_positive, discarded };

    Outcome outcome = Outcome::discarded;
    std::vector<Candidate> positives;
    std::vector<Candidate> negatives;

    static Partition make_discarded() { return {}; }
    static Partition make_all_positive(std::vector<Candidate> pos) {
        return {Outcome::all_positive, std::move(pos), {}};
    }
    static Partition make_split(std::vector<Candidate> pos, std::vector<Candidate> neg) {
        return {Outcome::split, std::move(pos), std::move(neg)};
    }
};

inline const char* partition_outcome_name(Partition::Outcome o) {
    switch (o) {
        case Partition::Outcome::split: return "split";
        case Partition::Outcome::all_positive: return "all_positive";
        case Partition::Outcome::discarded: return "discarded";
    }
    return "discarded";
}

// Majority-vote partition for closed-ended tasks. Candidates cluster by
// answer equivalence (a candidate joins the first cluster whose
// representative matches; answer-absent candidates always form singletons).
//   - one cluster            -> all_positive
//   - all clusters singleton -> discarded
//   - otherwise positives = largest cluster; ties go to the tied cluster
//     holding the lowest-perplexity candidate (PPL ties: stable order).
inline Partition partition_crt(const CandidateSet& candidates, double rel_tol = 1e-4) {
    if (candidates.empty())
        throw InvalidInputError("partition_crt: empty candidate set");

    const auto& items = candidates.items;
    std::vector<std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < items.size(); ++i) {
        bool placed = false;
        if (items[i].answer && items[i].answer->present) {
            for (auto& cluster : clusters) {
                const Candidate& rep = items[cluster.front()];
                if (rep.answer && answers_equivalent(*rep.answer, *items[i].answer, rel_tol)) {
                    cluster.push_back(i);
                    placed = true;
                    break;
                }
            }
        }
        if (!placed)
            clusters.push_back({i});
    }

    auto collect = [&](const std::vector<std::size_t>& idx) {
        std::vector<Candidate> out;
        out.reserve(idx.size());
        for (std::size_t i : idx) out.push_back(items[i]);
        return out;
    };

    if (clusters.size() == 1)
        return Partition::make_all_positive(collect(clusters.front()));

    std::size_t largest = 0;
    for (const auto& c : clusters) largest = std::max(largest, c.size());
    if (largest == 1)
        return Partition::make_discarded();

    // winner among the largest clusters: the one containing the candidate
    // with the lowest PPL (PPL ties resolve to the earliest stable index)
    std::size_t winner = clusters.size();
    double winner_ppl = 0.0;
    std::size_t winner_idx = 0;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        if (clusters[c].size() != largest) continue;
        for (std::size_t i : clusters[c]) {
            const double ppl = items[i].perplexity.value;
            if (winner == clusters.size() || ppl < winner_ppl ||
                (ppl == winner_ppl && i < winner_idx)) {
                winner = c;
                winner_ppl = ppl;
                winner_idx = i;
            }
        }
    }

    std::vector<std::size_t> neg_idx;
    for (std::size_t c = 0; c < clusters.size(); ++c)
        if (c != winner)
            neg_idx.insert(neg_idx.end(), clusters[c].begin(), clusters[c].end());
    std::sort(neg_idx.begin(), neg_idx.end());
    return Partition::make_split(collect(clusters[winner]), collect(neg_idx));
}

// Similarity-to-anchor partition for open-ended tasks: rank every candidate
// by cosine similarity to the anchor's embedding (the anchor itself ranks
// first at similarity 1), the top ceil(n/2) are positive, the rest negative.
inline Partition partition_oet(const CandidateSet& candidates, const Candidate& anchor) {
    if (candidates.empty())
        throw InvalidInputError("partition_oet: empty candidate set");
    if (!anchor.embedding)
        throw InternalError("partition_oet: anchor lacks an embedding");

    const auto& items = candidates.items;
    bool anchor_found = false;
    std::vector<std::pair<double, std::size_t>> ranked;
    ranked.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (!items[i].embedding)
            throw InternalError("partition_oet: candidate lacks an embedding");
        double sim;
        if (items[i].source == anchor.source) {
            sim = 1.0;
            anchor_found = true;
        } else {
            sim = cosine_similarity(*anchor.embedding, *items[i].embedding);
        }
        ranked.emplace_back(sim, i);
    }
    if (!anchor_found)
        throw InternalError("partition_oet: anchor is not a member of the candidate set");

    if (items.size() == 1)
        return Partition::make_all_positive({items.front()});

    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });

    const std::size_t pos_count = (items.size() + 1) / 2;
    std::vector<Candidate> pos, neg;
    for (std::size_t r = 0; r < ranked.size(); ++r)
        (r < pos_count ? pos : neg).push_back(items[ranked[r].second]);
    return Partition::make_split(std::move(pos), std::move(neg));
}

struct SelectedPair {
    Candidate positive;
    std::optional<Candidate> negative;
};

// Min-PPL selection from each side: the most confident positive, and the
// most confident member of the negatives (the confident hallucination).
// Ties break on stable candidate order: teacher first, then student index.
inline SelectedPair select_contrastive_pair(const Partition& partition) {
    if (partition.outcome == Partition::Outcome::discarded)
        throw InternalError("select_contrastive_pair: called on a discarded partition");
    if (partition.positives.empty())
        throw InternalError("select_contrastive_pair: empty positive set");

    auto argmin_ppl = [](const std::vector<Candidate>& set) {
        const Candidate* best = &set.front();
        for (const Candidate& c : set) {
            if (c.perplexity.value < best->perplexity.value ||
                (c.perplexity.value == best->perplexity.value &&
                 c.source.order_key() < best->source.order_key()))
                best = &c;
        }
        return *best;
    };

    SelectedPair out{argmin_ppl(partition.positives), std::nullopt};
    if (!partition.negatives.empty())
        out.negative = argmin_ppl(partition.negatives);
    return out;
}

namespace detail {

inline std::string trim_copy(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

// Pulls "<LABEL>: text" out of a response, scanning line by line; leading
// list bullets are tolerated. Returns the trimmed text after the label.
inline std::optional<std::string> labeled_line(const std::string& text, std::string_view label) {
    std::size_t pos = 0;
    std::optional<std::string> found;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = trim_copy(std::string_view(text).substr(pos, eol - pos));
        while (!line.empty() && (line.front() == '-' || line.front() == '*'))
            line = trim_copy(std::string_view(line).substr(1));
        if (line.size() > label.size()) {
            bool match = true;
            for (std::size_t i = 0; i < label.size(); ++i)
                if (std::toupper(static_cast<unsigned char>(line[i])) != label[i]) {
                    match = false;
                    break;
                }
            if (match && line[label.size()] == ':') {
                std::string body = trim_copy(std::string_view(line).substr(label.size() + 1));
                if (!body.empty() && !found)
                    found = body;
            }
        }
        if (eol == text.size()) break;
        pos = eol + 1;
    }
    return found;
}

}  // namespace detail

// Distills the gap between a selected positive and negative candidate into
// a rule pair. One joint summarizer call is tried first; if its output
// cannot be parsed into both rules, two single-rule calls (positive then
// negative) are made. A still-unparseable result skips the rules for this
// query with a warning.
class Distiller {
public:
    Distiller(LlmBackend& backend, const AgentSet& agents, std::size_t max_rule_chars = 400,
              WarnSink warn = {})
        : backend_(backend),
          agents_(agents),
          max_rule_chars_(max_rule_chars),
          warn_(warn ? std::move(warn) : stderr_warn_sink()) {}

    std::optional<RulePair> summarize_rules(const std::string& query, const Candidate& positive,
                                            const Candidate& negative) const {
        const std::string payload = "Problem:\n" + query + "\n\nBetter response:\n" +
                                    positive.text + "\n\nWorse response:\n" + negative.text;

        std::optional<std::string> pos, neg;
        try {
            const auto joint = backend_.generate(joint_summarizer_prompt(agents_), payload,
                                                 agents_.summarizer_positive.decoding);
            pos = detail::labeled_line(joint.text, "DO");
            neg = detail::labeled_line(joint.text, "AVOID");
        } catch (const Error& e) {
            warn_(std::string("joint summarizer call failed: ") + e.what());
        }

        if (!pos || !neg) {
            // fallback: positive then negative, one call each
            if (!pos) pos = single_rule(AgentRole::summarizer_positive, payload, "DO");
            if (!neg) neg = single_rule(AgentRole::summarizer_negative, payload, "AVOID");
        }
        if (!pos || !neg) {
            warn_("summarizer output unparseable after fallback; skipping rules for this query");
            return std::nullopt;
        }

        RulePair pair{clip(*pos), clip(*neg), query};
        return pair;
    }

private:
    std::optional<std::string> single_rule(AgentRole role, const std::string& payload,
                                           std::string_view label) const {
        try {
            const AgentProfile& profile = agents_.by_role(role);
            const auto result = backend_.generate(profile.system_prompt, payload, profile.decoding);
            if (auto line = detail::labeled_line(result.text, label))
                return line;
            // a bare single-line reply without the label is still usable
            const std::string whole = detail::trim_copy(result.text);
            if (!whole.empty() && whole.find('\n') == std::string::npos)
                return whole;
        } catch (const Error& e) {
            warn_(std::string("summarizer fallback call failed: ") + e.what());
        }
        return std::nullopt;
    }

    std::string clip(std::string s) const {
        if (s.size() > max_rule_chars_)
            s.resize(max_rule_chars_);
        return s;
    }

    LlmBackend& backend_;
    const AgentSet& agents_;
    std::size_t max_rule_chars_;
    WarnSink warn_;
};

}  // namespace ruleloop
