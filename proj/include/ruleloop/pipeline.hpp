#pragma once

#include <chrono>
#include <cstdint>
#include <future>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ruleloop/agents.hpp"
#include "ruleloop/distillation.hpp"
#include "ruleloop/exploration.hpp"
#include "ruleloop/metrics.hpp"
#include "ruleloop/repository.hpp"
#include "ruleloop/sim_backend.hpp"

namespace ruleloop {

struct PipelineConfig {
    TaskRegime regime = TaskRegime::crt;
    int n_variants = 4;           // student samples per query
    std::size_t k_retrieve = 30;  // retrieved rules per polarity
    std::size_t token_budget = 4096;
    bool memory_enabled = true;   // false: no retrieval, no rule distillation
    double answer_tolerance = 1e-4;
    std::size_t max_rule_chars = 400;
};

enum class AnswerSource { positive_selected, teacher_fallback };

inline const char* answer_source_name(AnswerSource s) {
    return s == AnswerSource::positive_selected ? "positive_selected" : "teacher_fallback";
}

struct StageTimings {
    double retrieve_ms = 0.0;
    double tutor_ms = 0.0;
    double generate_ms = 0.0;  // overlapped teacher/student phase
    double total_ms = 0.0;     // entry (incl. summarization barrier) to answer
};

struct QueryRecord {
    std::string id;
    std::string query;
    std::string answer;
    AnswerSource source = AnswerSource::teacher_fallback;
    std::string partition_outcome;  // split | all_positive | discarded | error
    std::vector<std::uint64_t> rules_retrieved;
    std::vector<std::uint64_t> rules_emitted;
    StageTimings timings;
    std::string error;  // empty on success
};

struct StreamItem {
    std::string id;
    std::string query;
    std::optional<std::string> reference;
};

struct StreamReport {
    std::vector<QueryRecord> records;
    std::optional<MetricResult> metric;  // absent when any reference is missing
    std::size_t positive_selected_count = 0;
    std::size_t teacher_fallback_count = 0;
    std::size_t rules_emitted_total = 0;
    std::size_t queries_with_errors = 0;
};

// Strict online single-pass loop over a query stream. Per query, in order:
// retrieve and render rules, rewrite via the tutor, generate the teacher
// anchor and N student samples (teacher concurrent with the tutor/students),
// partition, answer from the selected positive (teacher anchor on discard),
// then summarize and store rules asynchronously. The summarization of query
// t may overlap delivery of its answer but always completes before query
// t+1 starts retrieval: process_query waits on the pending task at entry.
//
// Exactly one query is in flight at a time; Pipeline is not itself
// thread-safe.
class Pipeline {
public:
    Pipeline(LlmBackend& backend, AgentSet agents, RuleRepository& repository,
             PipelineConfig config, WarnSink warn = {})
        : backend_(backend),
          agents_(std::move(agents)),
          repository_(repository),
          config_(config),
          warn_(warn ? std::move(warn) : stderr_warn_sink()),
          explorer_(backend_, agents_, config_.regime, warn_),
          distiller_(backend_, agents_, config_.max_rule_chars, warn_) {
        if (config_.n_variants < 1)
            throw InvalidInputError("Pipeline: n_variants must be >= 1");
    }

    std::uint64_t step() const noexcept { return step_; }

    // Records are finalized (rule-emission ids filled in) once the pending
    // summarization barrier has passed; flush() forces that.
    const std::vector<QueryRecord>& records() const { return records_; }

    void flush() { wait_pending(); }

    // Answers one query and appends its record. The returned record mirrors
    // records().back() at answer time; if rule summarization is still in
    // flight its emitted-rule ids are filled into the stored record at the
    // next barrier.
    std::pair<std::string, QueryRecord> process_query(const std::string& query,
                                                      const std::string& id = {}) {
        const auto entry_time = Clock::now();
        wait_pending();  // rules of query t are stored before query t+1 retrieves
        ++step_;

        QueryRecord rec;
        rec.id = id.empty() ? "q" + std::to_string(step_) : id;
        rec.query = query;
        try {
            run_one(query, rec);
        } catch (const std::exception& e) {
            rec.error = e.what();
            rec.partition_outcome = "error";
            warn_("query " + rec.id + " failed: " + e.what());
        }
        rec.timings.total_ms = ms_since(entry_time);
        records_.push_back(rec);
        return {rec.answer, rec};
    }

    // Processes the dataset strictly in order, exactly once each; references
    // are used only for scoring after the loop and are never visible to any
    // agent prompt.
    StreamReport run_stream(const std::vector<StreamItem>& dataset) {
        StreamReport report;
        for (const StreamItem& item : dataset)
            process_query(item.query, item.id);
        flush();
        report.records = records_;

        bool all_refs = !dataset.empty();
        for (const StreamItem& item : dataset)
            all_refs = all_refs && item.reference.has_value();
        if (all_refs) {
            std::vector<std::string> predictions, references;
            predictions.reserve(dataset.size());
            for (std::size_t i = 0; i < dataset.size(); ++i) {
                predictions.push_back(report.records[i].answer);
                references.push_back(*dataset[i].reference);
            }
            report.metric =
                aggregate(predictions, references, config_.regime, config_.answer_tolerance);
        }

        for (const QueryRecord& r : report.records) {
            if (!r.error.empty()) ++report.queries_with_errors;
            if (r.source == AnswerSource::positive_selected)
                ++report.positive_selected_count;
            else
                ++report.teacher_fallback_count;
            report.rules_emitted_total += r.rules_emitted.size();
        }
        return report;
    }

private:
    using Clock = std::chrono::steady_clock;

    static double ms_since(Clock::time_point start) {
        return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    }

    void wait_pending() {
        if (!pending_.valid())
            return;
        std::vector<std::uint64_t> emitted = pending_.get();
        if (pending_record_ < records_.size())
            records_[pending_record_].rules_emitted = std::move(emitted);
    }

    void run_one(const std::string& query, QueryRecord& rec) {
        // (1)+(2) retrieve and render the rule context
        const auto retrieve_start = Clock::now();
        RetrievedContext retrieved;
        if (config_.memory_enabled && config_.k_retrieve > 0) {
            try {
                retrieved = repository_.retrieve(backend_.embed(query), config_.k_retrieve);
            } catch (const Error& e) {
                warn_("rule retrieval failed for " + rec.id + ": " + e.what());
                retrieved = {};
            }
            retrieved = truncate_to_budget(retrieved, config_.token_budget);
        }
        for (const ScoredRule& r : retrieved.positives) rec.rules_retrieved.push_back(r.rule.id);
        for (const ScoredRule& r : retrieved.negatives) rec.rules_retrieved.push_back(r.rule.id);
        const RenderedRuleContext context = render_context(retrieved);
        rec.timings.retrieve_ms = ms_since(retrieve_start);

        // (3)+(4) teacher anchor concurrent with the tutor; students start
        // once the tutor's variants exist, all sharing the same context
        const auto tutor_start = Clock::now();
        auto anchor_future = std::async(std::launch::async, [this, &query, &context]() {
            return explorer_.anchor_generate(query, context);
        });
        std::vector<RewrittenQuery> variants;
        try {
            variants = explorer_.rewrite_query(query, config_.n_variants);
        } catch (const Error& e) {
            warn_("rewrite failed for " + rec.id + ": " + e.what());
            for (int i = 1; i <= config_.n_variants; ++i) variants.push_back({i, query});
        }
        rec.timings.tutor_ms = ms_since(tutor_start);

        std::vector<Candidate> students;
        try {
            students = explorer_.sample_responses(variants, context);
        } catch (const ExplorationError& e) {
            warn_(std::string("no student samples for ") + rec.id + ": " + e.what());
        }

        std::optional<Candidate> anchor;
        try {
            anchor = anchor_future.get();
        } catch (const Error& e) {
            warn_("anchor generation failed for " + rec.id + ": " + e.what());
        }
        rec.timings.generate_ms = ms_since(tutor_start);

        if (!anchor && students.empty())
            throw Error("all generations failed");

        if (!anchor) {
            // degraded mode: no anchor to partition around; answer with the
            // most confident surviving student and skip distillation
            const Candidate* best = &students.front();
            for (const Candidate& c : students)
                if (c.perplexity.value < best->perplexity.value ||
                    (c.perplexity.value == best->perplexity.value &&
                     c.source.order_key() < best->source.order_key()))
                    best = &c;
            rec.answer = best->text;
            rec.source = AnswerSource::teacher_fallback;
            rec.partition_outcome = "error";
            rec.error = "anchor generation failed";
            return;
        }

        // (5)+(6) candidate set, embeddings for OET, partition
        CandidateSet candidates = Explorer::build_candidate_set(*anchor, std::move(students));
        Partition partition;
        if (config_.regime == TaskRegime::crt) {
            partition = partition_crt(candidates, config_.answer_tolerance);
        } else {
            for (Candidate& c : candidates.items)
                c.embedding = backend_.embed(c.text);  // once per candidate, reused below
            partition = partition_oet(candidates, candidates.items.front());
        }
        rec.partition_outcome = partition_outcome_name(partition.outcome);

        // (7)+(8) answer selection
        if (partition.outcome == Partition::Outcome::discarded) {
            rec.answer = candidates.items.front().text;  // the greedy anchor
            rec.source = AnswerSource::teacher_fallback;
            return;
        }
        SelectedPair selected = select_contrastive_pair(partition);
        rec.answer = selected.positive.text;
        rec.source = AnswerSource::positive_selected;

        // (9) contrastive summarization and storage, off the answer path
        if (selected.negative && config_.memory_enabled) {
            pending_record_ = records_.size();  // this record's slot
            pending_ = std::async(std::launch::async,
                                  [this, query, positive = selected.positive,
                                   negative = *selected.negative]() {
                                      return summarize_and_store(query, positive, negative);
                                  });
        }
    }

    std::vector<std::uint64_t> summarize_and_store(const std::string& query,
                                                   const Candidate& positive,
                                                   const Candidate& negative) {
        std::vector<std::uint64_t> emitted;
        const auto pair = distiller_.summarize_rules(query, positive, negative);
        if (!pair)
            return emitted;
        try {
            const auto inserted = repository_.insert(
                *pair, [this](const std::string& text) { return backend_.embed(text); });
            if (inserted) {
                emitted.push_back(inserted->first.id);
                emitted.push_back(inserted->second.id);
            }
        } catch (const Error& e) {
            warn_(std::string("rule storage failed: ") + e.what());
        }
        return emitted;
    }

    LlmBackend& backend_;
    AgentSet agents_;
    RuleRepository& repository_;
    PipelineConfig config_;
    WarnSink warn_;
    Explorer explorer_;
    Distiller distiller_;

    std::uint64_t step_ = 0;
    std::vector<QueryRecord> records_;
    std::future<std::vector<std::uint64_t>> pending_;
    std::size_t pending_record_ = 0;
};

// Registers the five agent system prompts (plus the composed joint
// summarizer prompt) with a simulator so script entries can address calls by
// role name.
inline void register_sim_roles(SimBackend& sim, const AgentSet& agents) {
    sim.register_role("teacher", agents.teacher.system_prompt);
    sim.register_role("tutor", agents.tutor.system_prompt);
    sim.register_role("student", agents.student.system_prompt);
    sim.register_role("summarizer_positive", agents.summarizer_positive.system_prompt);
    sim.register_role("summarizer_negative", agents.summarizer_negative.system_prompt);
    sim.register_role("summarizer", joint_summarizer_prompt(agents));
}

}  // namespace ruleloop
