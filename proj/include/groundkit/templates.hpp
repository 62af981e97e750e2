#pragma once
// Prompt-template ensemble: eight paraphrased instructions sharing one output
// schema. The shipped data/pte8_templates.json mirrors kBuiltinTemplates.

#include <array>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "groundkit/error.hpp"

namespace groundkit {

struct PromptTemplate {
    int id = 0;
    std::string text;  // contains a {scenario} placeholder
};

inline constexpr std::string_view kSchemaInstruction =
    "First reason inside <think></think>. Then output a single JSON object inside "
    "<answer></answer> with keys \"target_object\" (category name) and \"bbox\" "
    "([x, y, w, h] in integer pixels, inside the image).";

inline const std::vector<PromptTemplate>& builtin_templates() {
    static const std::vector<PromptTemplate> templates = [] {
        const std::array<std::string_view, 8> leads = {
            "Scenario: {scenario}\nFind the single object in the image that this scenario is about.",
            "Read the situation below and locate the object the person needs.\nSituation: {scenario}",
            "{scenario}\nWhich object in the picture fits this description? Localize it.",
            "Given the user's situation, identify and box the relevant object.\nUser situation: {scenario}",
            "Here is what someone is trying to do: {scenario}\nPoint out the object in the image that helps them.",
            "Context: {scenario}\nDetermine which visible object is being referred to and give its location.",
            "Look at the image. {scenario}\nSelect the one object that matches and report where it is.",
            "Task: ground the scenario in the image.\nScenario text: {scenario}",
        };
        std::vector<PromptTemplate> out;
        for (std::size_t i = 0; i < leads.size(); ++i)
            out.push_back({static_cast<int>(i), std::string(leads[i]) + "\n" + std::string(kSchemaInstruction)});
        return out;
    }();
    return templates;
}

inline nlohmann::json templates_to_json(const std::vector<PromptTemplate>& ts) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : ts) arr.push_back({{"id", t.id}, {"text", t.text}});
    return {{"templates", arr}};
}

inline std::vector<PromptTemplate> load_templates(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, "cannot open file");
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.contains("templates") || !j["templates"].is_array())
        throw ParseError(path, "expected {\"templates\": [...]}");
    std::vector<PromptTemplate> out;
    for (const auto& t : j["templates"]) {
        if (!t.contains("id") || !t.contains("text") || !t["text"].is_string() || !t["id"].is_number_integer())
            throw ParseError(path, "template entries need integer id and string text");
        const auto text = t["text"].get<std::string>();
        if (text.find("{scenario}") == std::string::npos)
            throw ValidationError(path, "template " + t["id"].dump() + " lacks {scenario}");
        out.push_back({t["id"].get<int>(), text});
    }
    if (out.empty()) throw ValidationError(path, "no templates");
    return out;
}

/// Substitutes every {scenario} placeholder.
inline std::string render_prompt(const PromptTemplate& t, std::string_view scenario) {
    std::string out;
    constexpr std::string_view ph = "{scenario}";
    std::size_t pos = 0;
    for (;;) {
        const auto hit = t.text.find(ph, pos);
        if (hit == std::string::npos) break;
        out.append(t.text, pos, hit - pos);
        out += scenario;
        pos = hit + ph.size();
    }
    out.append(t.text, pos);
    return out;
}

} // namespace groundkit
