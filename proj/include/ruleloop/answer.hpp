#pragma once

#include <cctype>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace ruleloop {

// A final answer pulled out of a response, with a canonical form for string
// comparison and a numeric reading when one exists. `present` is false for
// the answer-absent marker: such answers never compare equal to anything,
// including each other.
struct NormalizedAnswer {
    std::string raw;
    std::string canonical;
    std::optional<double> numeric;
    bool present = false;

    static NormalizedAnswer absent(std::string raw_text = {}) {
        return {std::move(raw_text), {}, std::nullopt, false};
    }
};

namespace detail {

// Replaces \frac{a}{b} (and \dfrac, \tfrac) with a/b. Handles one level of
// nesting by balanced-brace scanning.
inline std::string rewrite_fractions(std::string s) {
    static constexpr std::string_view kNames[] = {"\\dfrac", "\\tfrac", "\\frac"};
    for (std::string_view name : kNames) {
        std::size_t pos = 0;
        while ((pos = s.find(name, pos)) != std::string::npos) {
            std::size_t i = pos + name.size();
            auto read_group = [&](std::string& out) -> bool {
                while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
                if (i >= s.size() || s[i] != '{') return false;
                int depth = 1;
                std::size_t start = ++i;
                while (i < s.size() && depth > 0) {
                    if (s[i] == '{') ++depth;
                    else if (s[i] == '}') --depth;
                    ++i;
                }
                if (depth != 0) return false;
                out = s.substr(start, i - start - 1);
                return true;
            };
            std::string num, den;
            if (!read_group(num) || !read_group(den)) {
                pos += name.size();
                continue;
            }
            s.replace(pos, i - pos, num + "/" + den);
        }
    }
    return s;
}

// Strips a LaTeX wrapper like \text{...} down to its content, repeatedly.
inline std::string strip_wrappers(std::string s) {
    static constexpr std::string_view kNames[] = {"\\textbf", "\\text", "\\mathrm",
                                                  "\\mathbf", "\\operatorname"};
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::string_view name : kNames) {
            std::size_t pos = s.find(name);
            if (pos == std::string::npos) continue;
            std::size_t i = pos + name.size();
            if (i >= s.size() || s[i] != '{') continue;
            int depth = 1;
            std::size_t start = ++i;
            while (i < s.size() && depth > 0) {
                if (s[i] == '{') ++depth;
                else if (s[i] == '}') --depth;
                ++i;
            }
            if (depth != 0) continue;
            const std::string content = s.substr(start, i - start - 1);
            s.replace(pos, i - pos, content);
            changed = true;
        }
    }
    return s;
}

inline void erase_all(std::string& s, std::string_view what) {
    std::size_t pos = 0;
    while ((pos = s.find(what, pos)) != std::string::npos)
        s.erase(pos, what.size());
}

}  // namespace detail

// Whitespace/LaTeX normalization: fractions become a/b, math-mode wrappers
// and spacing commands are dropped, thousands separators and all whitespace
// removed, trailing punctuation stripped, lowercased.
inline std::string normalize_answer_text(std::string s) {
    s = detail::rewrite_fractions(std::move(s));
    s = detail::strip_wrappers(std::move(s));
    for (std::string_view junk :
         {"\\left", "\\right", "\\!", "\\,", "\\;", "\\:", "$", "\\(", "\\)", "\\[", "\\]"})
        detail::erase_all(s, junk);

    // thousands separators: a comma directly between digits
    std::string no_commas;
    no_commas.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == ',' && i > 0 && i + 1 < s.size() &&
            std::isdigit(static_cast<unsigned char>(s[i - 1])) &&
            std::isdigit(static_cast<unsigned char>(s[i + 1])))
            continue;
        no_commas.push_back(s[i]);
    }

    std::string out;
    out.reserve(no_commas.size());
    for (char c : no_commas) {
        if (std::isspace(static_cast<unsigned char>(c))) continue;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    while (!out.empty() && (out.back() == '.' || out.back() == ',' || out.back() == ';' ||
                            out.back() == ':'))
        out.pop_back();
    return out;
}

// Numeric reading of a canonical answer: a plain decimal (strtod, full
// match) or a simple fraction p/q.
inline std::optional<double> parse_numeric(const std::string& canonical) {
    if (canonical.empty()) return std::nullopt;
    const auto slash = canonical.find('/');
    if (slash != std::string::npos && slash > 0 && slash + 1 < canonical.size()) {
        const std::string num = canonical.substr(0, slash);
        const std::string den = canonical.substr(slash + 1);
        std::size_t consumed_n = 0, consumed_d = 0;
        try {
            const double n = std::stod(num, &consumed_n);
            const double d = std::stod(den, &consumed_d);
            if (consumed_n == num.size() && consumed_d == den.size() && d != 0.0)
                return n / d;
        } catch (...) {
        }
        return std::nullopt;
    }
    std::size_t consumed = 0;
    try {
        const double v = std::stod(canonical, &consumed);
        if (consumed == canonical.size() && std::isfinite(v))
            return v;
    } catch (...) {
    }
    return std::nullopt;
}

namespace detail {

// Last number-like token: sign, digits with optional thousands groups and
// decimal part, optionally followed by /digits as a fraction.
inline std::optional<std::string> last_number_token(const std::string& text) {
    std::optional<std::string> best;
    std::size_t i = 0;
    while (i < text.size()) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (!std::isdigit(c) && !(c == '.' && i + 1 < text.size() &&
                                  std::isdigit(static_cast<unsigned char>(text[i + 1])))) {
            ++i;
            continue;
        }
        std::size_t start = i;
        if (start > 0 && (text[start - 1] == '-' || text[start - 1] == '+')) {
            const bool unary =
                start == 1 || !std::isalnum(static_cast<unsigned char>(text[start - 2]));
            if (unary) --start;
        }
        bool seen_dot = false;
        while (i < text.size()) {
            const unsigned char d = static_cast<unsigned char>(text[i]);
            if (std::isdigit(d)) {
                ++i;
            } else if (d == '.' && !seen_dot && i + 1 < text.size() &&
                       std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
                seen_dot = true;
                ++i;
            } else if (d == ',' && i + 3 < text.size() &&
                       std::isdigit(static_cast<unsigned char>(text[i + 1])) &&
                       std::isdigit(static_cast<unsigned char>(text[i + 2])) &&
                       std::isdigit(static_cast<unsigned char>(text[i + 3]))) {
                ++i;
            } else {
                break;
            }
        }
        // fraction tail
        if (i < text.size() && text[i] == '/' && i + 1 < text.size() &&
            std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
            ++i;
            while (i < text.size() && (std::isdigit(static_cast<unsigned char>(text[i])) ||
                                       (text[i] == '.' && i + 1 < text.size() &&
                                        std::isdigit(static_cast<unsigned char>(text[i + 1])))))
                ++i;
        }
        best = text.substr(start, i - start);
    }
    return best;
}

inline std::optional<std::string> last_boxed_content(const std::string& text) {
    static constexpr std::string_view kBoxed = "\\boxed{";
    std::optional<std::string> best;
    std::size_t pos = 0;
    while ((pos = text.find(kBoxed, pos)) != std::string::npos) {
        std::size_t i = pos + kBoxed.size();
        int depth = 1;
        const std::size_t start = i;
        while (i < text.size() && depth > 0) {
            if (text[i] == '{') ++depth;
            else if (text[i] == '}') --depth;
            ++i;
        }
        if (depth == 0)
            best = text.substr(start, i - start - 1);
        pos = i;
    }
    return best;
}

}  // namespace detail

// Canonical final answer: the last \boxed{...} expression if one exists,
// otherwise the last number-like token. Returns the absent marker when
// neither yields anything.
inline NormalizedAnswer extract_answer(const std::string& text) {
    if (auto boxed = detail::last_boxed_content(text)) {
        std::string canonical = normalize_answer_text(*boxed);
        if (!canonical.empty())
            return {*boxed, canonical, parse_numeric(canonical), true};
    }
    if (auto token = detail::last_number_token(text)) {
        std::string canonical = normalize_answer_text(*token);
        if (!canonical.empty())
            return {*token, canonical, parse_numeric(canonical), true};
    }
    return NormalizedAnswer::absent(text);
}

// Equivalence: canonical strings match, or both have numeric readings within
// a small relative tolerance. Absent answers never match.
inline bool answers_equivalent(const NormalizedAnswer& a, const NormalizedAnswer& b,
                               double rel_tol = 1e-4) {
    if (!a.present || !b.present)
        return false;
    if (a.canonical == b.canonical)
        return true;
    if (a.numeric && b.numeric) {
        const double x = *a.numeric, y = *b.numeric;
        return std::fabs(x - y) <= rel_tol * std::max({1.0, std::fabs(x), std::fabs(y)});
    }
    return false;
}

}  // namespace ruleloop
