#pragma once

#include <array>
#include <string>

#include "json.hpp"

#include "ruleloop/gateway.hpp"

namespace ruleloop {

// The exploration personas plus the two rule summarizers. All roles run on
// the same underlying model; only system prompt and decoding differ.
enum class AgentRole { teacher, tutor, student, summarizer_positive, summarizer_negative };

inline const char* role_name(AgentRole r) {
    switch (r) {
        case AgentRole::teacher: return "teacher";
        case AgentRole::tutor: return "tutor";
        case AgentRole::student: return "student";
        case AgentRole::summarizer_positive: return "summarizer_positive";
        case AgentRole::summarizer_negative: return "summarizer_negative";
    }
    return "unknown";
}

enum class TaskRegime { crt, oet };

inline const char* regime_name(TaskRegime r) {
    return r == TaskRegime::crt ? "crt" : "oet";
}

inline TaskRegime parse_regime(const std::string& s) {
    if (s == "crt") return TaskRegime::crt;
    if (s == "oet") return TaskRegime::oet;
    throw InvalidInputError("unknown regime '" + s + "' (expected crt or oet)");
}

struct AgentProfile {
    AgentRole role = AgentRole::teacher;
    std::string system_prompt;
    DecodingConfig decoding;
};

// Fixed for the lifetime of a stream run; read-only after construction.
struct AgentSet {
    AgentProfile teacher;
    AgentProfile tutor;
    AgentProfile student;
    AgentProfile summarizer_positive;
    AgentProfile summarizer_negative;

    const AgentProfile& by_role(AgentRole r) const {
        switch (r) {
            case AgentRole::teacher: return teacher;
            case AgentRole::tutor: return tutor;
            case AgentRole::student: return student;
            case AgentRole::summarizer_positive: return summarizer_positive;
            case AgentRole::summarizer_negative: return summarizer_negative;
        }
        throw InternalError("by_role: bad role");
    }

    AgentProfile& by_role(AgentRole r) {
        return const_cast<AgentProfile&>(static_cast<const AgentSet&>(*this).by_role(r));
    }
};

namespace detail {

inline std::string crt_solver_prompt(bool cite_rules) {
    std::string p = "You are a careful problem solver. Work the problem step by step";
    if (cite_rules)
        p += ", citing the definition or rule that justifies each step";
    p += ". Do not introduce names, quantities, or entities that are not in the problem. "
         "Keep each step short. End with the final answer written as \\boxed{answer}.";
    return p;
}

inline std::string oet_solver_prompt() {
    return "You answer questions for a demanding professional audience. Lead with the "
           "bottom line, then add only the detail the question actually needs. Stay "
           "factual, do not introduce claims the question does not support, and avoid "
           "filler or unnecessary lists.";
}

inline std::string tutor_prompt() {
    return "You rewrite problems without solving them. Produce the requested number of "
           "stylistically different rewrites that preserve the exact meaning, every "
           "quantity, and the required answer. Do not add, drop, or alter information. "
           "Output one rewrite per line, numbered '1.', '2.', and so on, with no other "
           "text.";
}

inline std::string summarizer_positive_prompt() {
    return "You are shown a problem, a better response, and a worse response. Write one "
           "short, reusable guideline describing what to do: the habit that made the "
           "better response succeed on this kind of problem. Do not copy "
           "problem-specific values unless essential. Respond with a single line "
           "starting with 'DO:'.";
}

inline std::string summarizer_negative_prompt() {
    return "You are shown a problem, a better response, and a worse response. Write one "
           "short, reusable warning describing what to avoid: the mistake that made the "
           "worse response fail on this kind of problem. Do not copy problem-specific "
           "values unless essential. Respond with a single line starting with 'AVOID:'.";
}

}  // namespace detail

// Five default profiles for a regime. The teacher decodes greedily; tutor
// and student sample at temperature 0.7, top_p 0.9. Prompt texts are
// defaults and fully overridable through configuration.
inline AgentSet default_profiles(TaskRegime regime) {
    const bool crt = regime == TaskRegime::crt;
    const int solver_tokens = crt ? 1024 : 512;

    AgentSet set;
    set.teacher = {AgentRole::teacher,
                   crt ? detail::crt_solver_prompt(true) : detail::oet_solver_prompt(),
                   DecodingConfig{0.0, 1.0, solver_tokens, true, {}}};
    set.student = {AgentRole::student,
                   crt ? detail::crt_solver_prompt(false) : detail::oet_solver_prompt(),
                   DecodingConfig{0.7, 0.9, solver_tokens, true, {}}};
    set.tutor = {AgentRole::tutor, detail::tutor_prompt(),
                 DecodingConfig{0.7, 0.9, 512, false, {}}};
    set.summarizer_positive = {AgentRole::summarizer_positive,
                               detail::summarizer_positive_prompt(),
                               DecodingConfig{0.0, 1.0, 256, false, {}}};
    set.summarizer_negative = {AgentRole::summarizer_negative,
                               detail::summarizer_negative_prompt(),
                               DecodingConfig{0.0, 1.0, 256, false, {}}};
    return set;
}

// System prompt for the single call that yields both rules at once. Built
// from the two per-polarity prompts so user overrides flow through.
inline std::string joint_summarizer_prompt(const AgentSet& set) {
    return set.summarizer_positive.system_prompt + "\n" +
           set.summarizer_negative.system_prompt + "\n" +
           "For this task, respond with exactly two lines: the DO line first, then the "
           "AVOID line.";
}

// Applies a role -> {system_prompt, temperature, top_p, max_tokens} document
// on top of the defaults. Unknown role keys are rejected.
inline void apply_profile_overrides(AgentSet& set, const nlohmann::json& overrides) {
    static constexpr std::array<AgentRole, 5> kRoles = {
        AgentRole::teacher, AgentRole::tutor, AgentRole::student,
        AgentRole::summarizer_positive, AgentRole::summarizer_negative};

    for (const auto& [key, value] : overrides.items()) {
        AgentProfile* profile = nullptr;
        for (AgentRole r : kRoles)
            if (key == role_name(r))
                profile = &set.by_role(r);
        if (!profile)
            throw InvalidInputError("profiles: unknown role '" + key + "'");
        if (value.contains("system_prompt"))
            profile->system_prompt = value["system_prompt"].get<std::string>();
        if (value.contains("temperature"))
            profile->decoding.temperature = value["temperature"].get<double>();
        if (value.contains("top_p"))
            profile->decoding.top_p = value["top_p"].get<double>();
        if (value.contains("max_tokens"))
            profile->decoding.max_tokens = value["max_tokens"].get<int>();
        profile->decoding.validate();
    }
}

}  // namespace ruleloop
