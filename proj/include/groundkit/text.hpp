#pragma once
// Name normalization shared by the reward engine, the eval harness and the
// leakage gate: lowercase, split on non-alphanumeric bytes, light plural
// stripping per token.

#include <algorithm>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace groundkit::text {

inline bool is_alnum(unsigned char c) noexcept {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

inline char to_lower(unsigned char c) noexcept {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}

/// Strips a trailing plural "s" (or "es" after x/z/ch/sh/ss) from a lowercase
/// token. Tokens of three characters or fewer, and tokens ending in "ss", are
/// left alone so "bus" and "glass" survive.
inline std::string stem(std::string token) {
    if (token.size() <= 3 || token.back() != 's' || token[token.size() - 2] == 's') return token;
    token.pop_back();
    const auto ends_with = [&](std::string_view suffix) {
        return token.size() > suffix.size() + 1 &&
               std::string_view(token).substr(token.size() - suffix.size()) == suffix;
    };
    if (ends_with("xe") || ends_with("ze") || ends_with("che") || ends_with("she") ||
        ends_with("sse")) {
        token.pop_back();
    }
    return token;
}

inline std::vector<std::string> tokens(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : s) {
        if (is_alnum(c)) {
            cur.push_back(to_lower(c));
        } else if (!cur.empty()) {
            out.push_back(stem(std::move(cur)));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(stem(std::move(cur)));
    return out;
}

/// Normalized name: stemmed tokens joined by single spaces.
inline std::string normalize(std::string_view s) {
    std::string out;
    for (const auto& t : tokens(s)) {
        if (!out.empty()) out.push_back(' ');
        out += t;
    }
    return out;
}

inline std::set<std::string> token_set(std::string_view s) {
    auto t = tokens(s);
    return {t.begin(), t.end()};
}

/// Token-level Jaccard similarity of two names; 0 when both are empty.
inline double jaccard(std::string_view a, std::string_view b) {
    const auto sa = token_set(a);
    const auto sb = token_set(b);
    if (sa.empty() && sb.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& t : sa) inter += sb.count(t);
    const std::size_t uni = sa.size() + sb.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

/// True when `needle` occurs as a contiguous token run in `haystack`.
inline bool contains_token_run(const std::vector<std::string>& haystack,
                               const std::vector<std::string>& needle) {
    if (needle.empty() || needle.size() > haystack.size()) return false;
    return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) !=
           haystack.end();
}

} // namespace groundkit::text
