#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ruleloop/errors.hpp"
#include "ruleloop/rules.hpp"

namespace ruleloop {

struct ScoredRule {
    Rule rule;
    double score = 0.0;
};

// Top-K rules per polarity for one query, sorted by descending similarity.
struct RetrievedContext {
    std::vector<ScoredRule> positives;
    std::vector<ScoredRule> negatives;

    bool empty() const noexcept { return positives.empty() && negatives.empty(); }
    std::size_t total() const noexcept { return positives.size() + negatives.size(); }
};

struct RenderedRuleContext {
    std::string text;
    std::size_t token_estimate = 0;
};

// Budget accounting uses this estimate throughout; it gates truncation only,
// never correctness.
inline std::size_t estimate_tokens(std::string_view text) {
    return (text.size() + 3) / 4;
}

inline constexpr std::string_view kPositiveRulesHeader =
    "Apply the following proven guidelines:\n";
inline constexpr std::string_view kNegativeRulesHeader =
    "Avoid the following known pitfalls:\n";

// Deterministic structured context: the guidance header and positive rules
// in descending score order, then the prohibition header and negatives.
// Empty sections are omitted entirely; an empty context renders to "".
inline RenderedRuleContext render_context(const RetrievedContext& ctx) {
    std::string text;
    if (!ctx.positives.empty()) {
        text += kPositiveRulesHeader;
        for (const ScoredRule& r : ctx.positives)
            text += "- " + r.rule.text + "\n";
    }
    if (!ctx.negatives.empty()) {
        text += kNegativeRulesHeader;
        for (const ScoredRule& r : ctx.negatives)
            text += "- " + r.rule.text + "\n";
    }
    const std::size_t estimate = estimate_tokens(text);
    return {std::move(text), estimate};
}

// Greedy budget fill: walk all retrieved rules by descending score
// (regardless of polarity), keep each rule while the rendered estimate of
// everything kept so far stays within the budget, and drop the rest as soon
// as one does not fit. Survivors keep their polarity grouping.
inline RetrievedContext truncate_to_budget(const RetrievedContext& ctx, std::size_t budget) {
    struct Item {
        const ScoredRule* rule;
        Polarity polarity;
    };
    std::vector<Item> merged;
    merged.reserve(ctx.total());
    for (const ScoredRule& r : ctx.positives) merged.push_back({&r, Polarity::positive});
    for (const ScoredRule& r : ctx.negatives) merged.push_back({&r, Polarity::negative});
    std::stable_sort(merged.begin(), merged.end(), [](const Item& a, const Item& b) {
        if (a.rule->score != b.rule->score) return a.rule->score > b.rule->score;
        return a.rule->rule.id < b.rule->rule.id;
    });

    RetrievedContext kept;
    for (const Item& item : merged) {
        RetrievedContext trial = kept;
        (item.polarity == Polarity::positive ? trial.positives : trial.negatives)
            .push_back(*item.rule);
        if (render_context(trial).token_estimate > budget)
            break;
        kept = std::move(trial);
    }
    return kept;
}

// Two disjoint capacity-bounded rule sets with embedding keys. Retrieval is
// an exhaustive cosine scan (exact by construction); capacity is enforced by
// similarity-based FIFO pruning: while over capacity, the older member of
// the most mutually similar pair is evicted, which degenerates to pure FIFO
// when all embeddings coincide.
//
// Concurrency: single writer, multiple readers. retrieve() takes a shared
// lock; insert()/prune() take an exclusive one.
class RuleRepository {
public:
    explicit RuleRepository(std::size_t capacity_per_polarity = 1000, WarnSink warn = {})
        : capacity_(capacity_per_polarity), warn_(warn ? std::move(warn) : stderr_warn_sink()) {
        if (capacity_ < 1)
            throw InvalidInputError("RuleRepository: capacity must be >= 1");
    }

    using EmbedFn = std::function<EmbeddingVector(const std::string&)>;

    // Appends the positive rule to the positive set and the negative rule to
    // the negative set, each keyed by a fresh embedding of its own text,
    // then prunes whichever set exceeds capacity. If embedding either text
    // fails, nothing is inserted and a warning is emitted.
    std::optional<std::pair<Rule, Rule>> insert(const RulePair& pair, const EmbedFn& embed) {
        EmbeddingVector pos_vec, neg_vec;
        try {
            pos_vec = embed(pair.positive);
            neg_vec = embed(pair.negative);
        } catch (const Error& e) {
            warn_(std::string("rule insertion skipped, embedding failed: ") + e.what());
            return std::nullopt;
        }

        std::unique_lock lock(mutex_);
        Rule pos{next_id_++, Polarity::positive, pair.positive, std::move(pos_vec),
                 pair.source_query};
        Rule neg{next_id_++, Polarity::negative, pair.negative, std::move(neg_vec),
                 pair.source_query};
        append_locked(store(Polarity::positive), pos);
        append_locked(store(Polarity::negative), neg);
        journal_locked(pos);
        journal_locked(neg);
        prune_locked(store(Polarity::positive), capacity_);
        prune_locked(store(Polarity::negative), capacity_);
        return std::make_pair(pos, neg);
    }

    // Exact top-k per polarity by cosine similarity; ties go to the older
    // rule (lower id). Fewer than k come back when a set is smaller.
    RetrievedContext retrieve(const EmbeddingVector& query, std::size_t k) const {
        std::shared_lock lock(mutex_);
        RetrievedContext ctx;
        ctx.positives = top_k_locked(positive_, query, k);
        ctx.negatives = top_k_locked(negative_, query, k);
        return ctx;
    }

    // Evicts down to `capacity` under the similarity-FIFO policy and returns
    // the evicted rules in eviction order.
    std::vector<Rule> prune(Polarity polarity, std::size_t capacity) {
        if (capacity < 1)
            throw InvalidInputError("prune: capacity must be >= 1");
        std::unique_lock lock(mutex_);
        return prune_locked(store(polarity), capacity);
    }

    std::size_t size(Polarity polarity) const {
        std::shared_lock lock(mutex_);
        return store(polarity).entries.size();
    }

    std::size_t capacity() const noexcept { return capacity_; }

    std::vector<std::uint64_t> ids(Polarity polarity) const {
        std::shared_lock lock(mutex_);
        const Store& s = store(polarity);
        std::vector<std::uint64_t> out;
        out.reserve(s.entries.size());
        for (const Entry& e : s.entries) out.push_back(e.rule.id);
        std::sort(out.begin(), out.end());
        return out;
    }

    std::optional<Rule> find(std::uint64_t id) const {
        std::shared_lock lock(mutex_);
        for (const Store* s : {&positive_, &negative_})
            for (const Entry& e : s->entries)
                if (e.rule.id == id) return e.rule;
        return std::nullopt;
    }

    // Append-only JSONL journal of inserted rules. State is reconstructable
    // by replaying the journal and re-applying pruning.
    void attach_journal(const std::string& path) {
        std::unique_lock lock(mutex_);
        journal_ = std::make_unique<std::ofstream>(path, std::ios::app);
        if (!*journal_)
            throw InvalidInputError("cannot open journal file " + path);
    }

    // Rebuilds state into this (empty) repository by replaying an
    // append-only journal; pruning is re-applied at this repository's
    // capacity, so the result matches the writer's final state.
    void load_journal(const std::string& path) {
        std::ifstream in(path);
        if (!in)
            throw InvalidInputError("cannot open journal file " + path);
        std::unique_lock lock(mutex_);
        if (!positive_.entries.empty() || !negative_.entries.empty())
            throw InvalidInputError("load_journal requires an empty repository");
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw InvalidInputError("journal line " + std::to_string(line_no) +
                                        ": invalid JSON: " + e.what());
            }
            Rule r;
            r.id = j.at("id").get<std::uint64_t>();
            r.polarity = j.at("polarity").get<std::string>() == "positive" ? Polarity::positive
                                                                           : Polarity::negative;
            r.text = j.at("text").get<std::string>();
            for (const auto& x : j.at("embedding")) r.embedding.values.push_back(x.get<double>());
            r.origin_query = j.at("origin_query").get<std::string>();

            next_id_ = std::max(next_id_, r.id + 1);
            append_locked(store(r.polarity), r);
            prune_locked(store(r.polarity), capacity_);
        }
    }

    static nlohmann::json rule_to_json(const Rule& r) {
        return nlohmann::json{{"id", r.id},
                              {"polarity", polarity_name(r.polarity)},
                              {"text", r.text},
                              {"embedding", r.embedding.values},
                              {"origin_query", r.origin_query}};
    }

private:
    struct Entry {
        Rule rule;
    };

    // Pairwise cosine similarities are kept incrementally (row per entry)
    // with a cached per-row maximum, so each eviction costs O(n) scans
    // instead of recomputing n^2 dot products. Self slots hold -2.0, below
    // any cosine, so max scans need no self check.
    struct Store {
        std::vector<Entry> entries;
        std::vector<std::uint64_t> ids;         // ids[i] == entries[i].rule.id
        std::vector<std::vector<double>> sims;  // sims[i][j] = cos(entry i, entry j)
        std::vector<std::size_t> row_best;      // index of the row maximum (id-tie: lower id)
        std::vector<bool> row_valid;
    };

    Store& store(Polarity p) { return p == Polarity::positive ? positive_ : negative_; }
    const Store& store(Polarity p) const { return p == Polarity::positive ? positive_ : negative_; }

    void append_locked(Store& s, const Rule& rule) {
        if (!s.entries.empty() &&
            rule.embedding.dimension() != s.entries.front().rule.embedding.dimension())
            throw InternalError("rule embedding dimension mismatch");
        const std::size_t n = s.entries.size();
        std::vector<double> row(n + 1, -2.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double sim = cosine_similarity(rule.embedding, s.entries[j].rule.embedding);
            row[j] = sim;
            s.sims[j].push_back(sim);
            if (s.row_valid[j]) {
                const double cur = s.sims[j][s.row_best[j]];
                if (sim > cur) s.row_best[j] = n;  // equal keeps the older partner
            }
        }
        s.entries.push_back({rule});
        s.ids.push_back(rule.id);
        s.sims.push_back(std::move(row));
        s.row_best.push_back(0);
        s.row_valid.push_back(false);
        if (n >= 1) recompute_row_best(s, n);
        if (n == 1) recompute_row_best(s, 0);
    }

    void recompute_row_best(Store& s, std::size_t i) const {
        const std::vector<double>& row = s.sims[i];
        const std::size_t n = s.entries.size();
        double best_val = -2.0;
        for (std::size_t j = 0; j < n; ++j)
            best_val = std::max(best_val, row[j]);  // self slot is -2.0
        std::size_t best = n;
        std::uint64_t best_id = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (row[j] != best_val) continue;
            if (best == n || s.ids[j] < best_id) {
                best = j;
                best_id = s.ids[j];
            }
        }
        s.row_best[i] = best;
        s.row_valid[i] = true;
    }

    // One eviction: pick the globally most similar pair (ties resolved to
    // the pair with the lowest ids) and remove its older member.
    Rule evict_one_locked(Store& s) {
        const std::size_t n = s.entries.size();
        std::size_t best_i = 0;
        bool have = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (!s.row_valid[i]) recompute_row_best(s, i);
            if (!have) {
                best_i = i;
                have = true;
                continue;
            }
            const double v = s.sims[i][s.row_best[i]];
            const double b = s.sims[best_i][s.row_best[best_i]];
            if (v > b) {
                best_i = i;
            } else if (v == b) {
                auto pair_ids = [&](std::size_t row) {
                    return std::minmax(s.ids[row], s.ids[s.row_best[row]]);
                };
                if (pair_ids(i) < pair_ids(best_i)) best_i = i;
            }
        }
        const std::size_t partner = s.row_best[best_i];
        const std::size_t victim = s.ids[best_i] < s.ids[partner] ? best_i : partner;
        Rule evicted = s.entries[victim].rule;
        remove_at(s, victim);
        return evicted;
    }

    static void remove_at(Store& s, std::size_t victim) {
        const std::size_t last = s.entries.size() - 1;
        if (victim != last) {
            for (std::size_t i = 0; i < last; ++i) s.sims[i][victim] = s.sims[i][last];
            s.entries[victim] = std::move(s.entries[last]);
            s.ids[victim] = s.ids[last];
            s.sims[victim] = std::move(s.sims[last]);
            s.sims[victim][victim] = -2.0;  // self slot of the moved entry
            s.row_valid[victim] = false;
        }
        s.entries.pop_back();
        s.ids.pop_back();
        s.sims.pop_back();
        s.row_best.pop_back();
        s.row_valid.pop_back();
        for (std::size_t i = 0; i < s.entries.size(); ++i) {
            s.sims[i].pop_back();
            // rows whose cached max referenced the evicted or the moved slot
            if (s.row_valid[i] &&
                (s.row_best[i] == victim || s.row_best[i] >= s.entries.size()))
                s.row_valid[i] = false;
        }
    }

    std::vector<Rule> prune_locked(Store& s, std::size_t capacity) {
        std::vector<Rule> evicted;
        while (s.entries.size() > capacity)
            evicted.push_back(evict_one_locked(s));
        return evicted;
    }

    std::vector<ScoredRule> top_k_locked(const Store& s, const EmbeddingVector& query,
                                         std::size_t k) const {
        if (k == 0 || s.entries.empty())
            return {};
        std::vector<std::pair<double, std::size_t>> scored;
        scored.reserve(s.entries.size());
        for (std::size_t i = 0; i < s.entries.size(); ++i)
            scored.emplace_back(cosine_similarity(query, s.entries[i].rule.embedding), i);
        const std::size_t take = std::min(k, scored.size());
        auto better = [&](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return s.entries[a.second].rule.id < s.entries[b.second].rule.id;
        };
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                          scored.end(), better);
        std::vector<ScoredRule> out;
        out.reserve(take);
        for (std::size_t i = 0; i < take; ++i)
            out.push_back({s.entries[scored[i].second].rule, scored[i].first});
        return out;
    }

    void journal_locked(const Rule& r) {
        if (!journal_) return;
        *journal_ << rule_to_json(r).dump() << '\n';
        journal_->flush();
    }

    std::size_t capacity_;
    WarnSink warn_;
    mutable std::shared_mutex mutex_;
    std::uint64_t next_id_ = 1;
    Store positive_;
    Store negative_;
    std::unique_ptr<std::ofstream> journal_;
};

}  // namespace ruleloop
