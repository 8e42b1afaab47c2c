#pragma once

#include <cctype>
#include <future>
#include <string>
#include <utility>
#include <vector>

#include "ruleloop/agents.hpp"
#include "ruleloop/candidates.hpp"
#include "ruleloop/repository.hpp"

namespace ruleloop {

struct RewrittenQuery {
    int index = 0;  // 1..N
    std::string text;
};

// User prompt seen by the teacher and every student: the rendered rule
// context (byte-identical across all of them for one query) followed by the
// query text.
inline std::string compose_user_prompt(const RenderedRuleContext& ctx, const std::string& query) {
    if (ctx.text.empty())
        return query;
    return ctx.text + "\n" + query;
}

// Candidate generation for one query: greedy teacher anchor, tutor rewrite
// into N variants, and N sampled student responses conditioned on the same
// retrieved-rule context.
class Explorer {
public:
    Explorer(LlmBackend& backend, const AgentSet& agents, TaskRegime regime, WarnSink warn = {})
        : backend_(backend),
          agents_(agents),
          regime_(regime),
          warn_(warn ? std::move(warn) : stderr_warn_sink()) {}

    // Greedy, context-conditioned anchor response.
    Candidate anchor_generate(const std::string& query, const RenderedRuleContext& ctx) const {
        const auto result = backend_.generate(agents_.teacher.system_prompt,
                                              compose_user_prompt(ctx, query),
                                              agents_.teacher.decoding);
        return make_candidate(result, CandidateSource::teacher());
    }

    // One tutor call asking for all n variants at once. Parse shortfalls are
    // padded with the original query; a fully unusable tutor reply degrades
    // to n copies of the original with a warning.
    std::vector<RewrittenQuery> rewrite_query(const std::string& query, int n) const {
        if (n < 1)
            throw InvalidInputError("rewrite_query: n must be >= 1");

        std::vector<std::string> parsed;
        try {
            const std::string request =
                "Rewrite the following into " + std::to_string(n) +
                " variants as instructed.\n\n" + query;
            const auto result =
                backend_.generate(agents_.tutor.system_prompt, request, agents_.tutor.decoding);
            parsed = parse_variant_lines(result.text);
        } catch (const Error& e) {
            warn_(std::string("tutor call failed: ") + e.what());
        }
        if (parsed.empty())
            warn_("tutor output unusable; all variants fall back to the original query");

        std::vector<RewrittenQuery> variants;
        variants.reserve(static_cast<std::size_t>(n));
        for (int i = 1; i <= n; ++i) {
            const std::size_t idx = static_cast<std::size_t>(i - 1);
            variants.push_back({i, idx < parsed.size() ? parsed[idx] : query});
        }
        return variants;
    }

    // Samples one student response per variant; the calls are dispatched
    // concurrently and all share the same rendered context. Individual
    // failures drop that candidate with a warning; if every call fails an
    // ExplorationError is thrown.
    std::vector<Candidate> sample_responses(const std::vector<RewrittenQuery>& variants,
                                            const RenderedRuleContext& ctx) const {
        std::vector<std::future<Candidate>> futures;
        futures.reserve(variants.size());
        for (const RewrittenQuery& v : variants) {
            futures.push_back(std::async(std::launch::async, [this, &ctx, v]() {
                const auto result = backend_.generate(agents_.student.system_prompt,
                                                      compose_user_prompt(ctx, v.text),
                                                      agents_.student.decoding);
                return make_candidate(result, CandidateSource::student(v.index));
            }));
        }

        std::vector<Candidate> out;
        out.reserve(variants.size());
        for (std::size_t i = 0; i < futures.size(); ++i) {
            try {
                out.push_back(futures[i].get());
            } catch (const Error& e) {
                warn_("student sample " + std::to_string(variants[i].index) +
                      " dropped: " + e.what());
            }
        }
        if (out.empty() && !variants.empty())
            throw ExplorationError("all student samples failed");
        return out;
    }

    // Teacher first, then students in index order.
    static CandidateSet build_candidate_set(Candidate anchor, std::vector<Candidate> students) {
        CandidateSet set;
        set.items.reserve(1 + students.size());
        set.items.push_back(std::move(anchor));
        for (Candidate& c : students)
            set.items.push_back(std::move(c));
        return set;
    }

    Candidate make_candidate(const GenerationResult& result, CandidateSource source) const {
        Candidate c;
        c.text = result.text;
        c.source = source;
        c.perplexity = perplexity_from(result);
        if (regime_ == TaskRegime::crt)
            c.answer = extract_answer(result.text);
        return c;
    }

private:
    // Accepts "1. text" / "1) text" / "- text" / bare lines; blank lines are
    // skipped.
    static std::vector<std::string> parse_variant_lines(const std::string& text) {
        std::vector<std::string> out;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            std::size_t eol = text.find('\n', pos);
            if (eol == std::string::npos) eol = text.size();
            std::string_view line(text.data() + pos, eol - pos);

            std::size_t b = 0, e = line.size();
            while (b < e && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
            while (e > b && std::isspace(static_cast<unsigned char>(line[e - 1]))) --e;
            line = line.substr(b, e - b);

            std::size_t i = 0;
            while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
            if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')'))
                line = line.substr(i + 1);
            else if (!line.empty() && (line.front() == '-' || line.front() == '*'))
                line = line.substr(1);
            while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front())))
                line = line.substr(1);

            if (!line.empty())
                out.emplace_back(line);
            if (eol == text.size()) break;
            pos = eol + 1;
        }
        return out;
    }

    LlmBackend& backend_;
    const AgentSet& agents_;
    TaskRegime regime_;
    WarnSink warn_;
};

}  // namespace ruleloop
