#pragma once
// Model completions of the form
//   <think>...</think><answer>{"target_object": "...", "bbox": [x, y, w, h]}</answer>
// Parsing is total: every failure is reported through ParseFlags.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "groundkit/box.hpp"

namespace groundkit {

struct ParseFlags {
    bool tag = false;   // a well-nested <answer>...</answer> pair exists
    bool json = false;  // the first balanced {...} inside it is a JSON object
    bool keys = false;  // both a name key and a box key resolved

    friend bool operator==(const ParseFlags&, const ParseFlags&) = default;
};

struct ParsedAnswer {
    ParseFlags flags;
    std::optional<std::string> name;
    std::optional<RawBox4> raw_box;
    std::optional<std::string> think_span;
    /// Number of additional <answer> spans after the first (ignored).
    std::size_t extra_answer_spans = 0;
};

/// Accepted JSON keys, in priority order.
struct ParserKeys {
    std::vector<std::string> name_keys{"target_object", "object", "category", "target", "name"};
    std::vector<std::string> box_keys{"bbox", "box", "bounding_box"};
};

namespace detail {

inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";
// Brace/bracket nesting beyond this is treated as not-JSON.
inline constexpr std::size_t kMaxJsonDepth = 256;

/// Span of the first balanced {...} in `s`, honouring JSON string literals.
inline std::optional<std::string_view> first_balanced_object(std::string_view s) {
    const std::size_t start = s.find('{');
    if (start == std::string_view::npos) return std::nullopt;
    std::size_t depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (escaped) escaped = false;
            else if (c == '\\') escaped = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{' || c == '[') {
            if (++depth > kMaxJsonDepth) return std::nullopt;
        } else if (c == '}' || c == ']') {
            if (depth == 0) return std::nullopt;
            if (--depth == 0) return c == '}' ? std::optional(s.substr(start, i - start + 1)) : std::nullopt;
        }
    }
    return std::nullopt;
}

} // namespace detail

inline ParsedAnswer parse_completion(std::string_view text, const ParserKeys& keys = {}) {
    ParsedAnswer out;

    if (const auto t0 = text.find("<think>"); t0 != std::string_view::npos) {
        const auto body = t0 + 7;
        if (const auto t1 = text.find("</think>", body); t1 != std::string_view::npos)
            out.think_span = std::string(text.substr(body, t1 - body));
    }

    const auto open = text.find(detail::kAnswerOpen);
    if (open == std::string_view::npos) return out;
    const auto body = open + detail::kAnswerOpen.size();
    const auto close = text.find(detail::kAnswerClose, body);
    if (close == std::string_view::npos) return out;
    out.flags.tag = true;

    for (auto pos = text.find(detail::kAnswerOpen, close); pos != std::string_view::npos;
         pos = text.find(detail::kAnswerOpen, pos + 1))
        ++out.extra_answer_spans;

    const auto obj = detail::first_balanced_object(text.substr(body, close - body));
    if (!obj) return out;
    const nlohmann::json j = nlohmann::json::parse(obj->begin(), obj->end(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) return out;
    out.flags.json = true;

    for (const auto& k : keys.name_keys) {
        const auto it = j.find(k);
        if (it != j.end() && it->is_string()) {
            out.name = it->get<std::string>();
            break;
        }
    }
    for (const auto& k : keys.box_keys) {
        const auto it = j.find(k);
        if (it == j.end() || !it->is_array() || it->size() != 4) continue;
        RawBox4 box{};
        bool numeric = true;
        for (std::size_t i = 0; i < 4 && numeric; ++i) {
            numeric = (*it)[i].is_number();
            if (numeric) box[i] = (*it)[i].get<double>();
        }
        if (numeric) {
            out.raw_box = box;
            break;
        }
    }
    out.flags.keys = out.name.has_value() && out.raw_box.has_value();
    return out;
}

/// Inverse of parse_completion for a resolved (name, box). '<' and '>' inside
/// the JSON are written as \u escapes so a name can never close the span.
inline std::string render_completion(std::string_view think, std::string_view name,
                                     const BoundingBox& box) {
    const nlohmann::json j = {{"target_object", std::string(name)},
                              {"bbox", {box.x, box.y, box.w, box.h}}};
    const std::string raw = j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    std::string payload;
    payload.reserve(raw.size());
    for (char c : raw) {
        if (c == '<') payload += "\\u003c";
        else if (c == '>') payload += "\\u003e";
        else payload.push_back(c);
    }
    std::string out;
    out.reserve(think.size() + payload.size() + 40);
    out += "<think>";
    out += think;
    out += "</think><answer>";
    out += payload;
    out += "</answer>";
    return out;
}

inline nlohmann::json to_json(const ParsedAnswer& p) {
    nlohmann::json j;
    j["flags"] = {{"tag", p.flags.tag ? 1 : 0}, {"json", p.flags.json ? 1 : 0}, {"keys", p.flags.keys ? 1 : 0}};
    j["name"] = p.name ? nlohmann::json(*p.name) : nlohmann::json(nullptr);
    j["bbox"] = p.raw_box ? nlohmann::json(*p.raw_box) : nlohmann::json(nullptr);
    j["think"] = p.think_span ? nlohmann::json(*p.think_span) : nlohmann::json(nullptr);
    if (p.extra_answer_spans > 0) j["warnings"] = {"extra <answer> spans ignored: " + std::to_string(p.extra_answer_spans)};
    return j;
}

} // namespace groundkit
