#include <gtest/gtest.h>

#include <chrono>
#include <string>

#include "groundkit/completion.hpp"
#include "groundkit/rng.hpp"

using namespace groundkit;

namespace {

void expect_flags(const ParsedAnswer& p, bool tag, bool json, bool keys) {
    EXPECT_EQ(p.flags.tag, tag);
    EXPECT_EQ(p.flags.json, json);
    EXPECT_EQ(p.flags.keys, keys);
}

void expect_flag_implications(const ParsedAnswer& p) {
    EXPECT_TRUE(!p.flags.json || p.flags.tag);
    EXPECT_TRUE(!p.flags.keys || p.flags.json);
    EXPECT_TRUE(!(p.name || p.raw_box) || p.flags.json);
    EXPECT_EQ(p.flags.keys, p.name.has_value() && p.raw_box.has_value());
}

} // namespace

TEST(ParseCompletion, SchemaExample) {
    const auto p = parse_completion(
        R"(<think>the cup holds coffee</think><answer>{"target_object":"cup","bbox":[5,5,20,20]}</answer>)");
    expect_flags(p, true, true, true);
    EXPECT_EQ(*p.name, "cup");
    EXPECT_EQ(*p.raw_box, (RawBox4{5, 5, 20, 20}));
    EXPECT_EQ(*p.think_span, "the cup holds coffee");
}

TEST(ParseCompletion, AnswerNotJson) {
    const auto p = parse_completion("<answer>not json</answer>");
    expect_flags(p, true, false, false);
    EXPECT_FALSE(p.name);
    EXPECT_FALSE(p.raw_box);
}

TEST(ParseCompletion, NoTags) {
    const auto p = parse_completion(R"({"target_object":"cup","bbox":[1,2,3,4]})");
    expect_flags(p, false, false, false);
    EXPECT_FALSE(p.name);
}

TEST(ParseCompletion, EmptyInput) { expect_flags(parse_completion(""), false, false, false); }

TEST(ParseCompletion, UnclosedAnswer) {
    expect_flags(parse_completion(R"(<answer>{"target_object":"cup","bbox":[1,2,3,4]})"), false, false, false);
}

TEST(ParseCompletion, KeyAliasesInPriorityOrder) {
    const auto p = parse_completion(R"(<answer>{"name":"b","object":"a","box":[1,2,3,4],"bounding_box":[9,9,9,9]}</answer>)");
    expect_flags(p, true, true, true);
    EXPECT_EQ(*p.name, "a");
    EXPECT_EQ(*p.raw_box, (RawBox4{1, 2, 3, 4}));
}

TEST(ParseCompletion, ConfiguredKeys) {
    ParserKeys keys;
    keys.name_keys = {"label"};
    keys.box_keys = {"rect"};
    const auto p = parse_completion(R"(<answer>{"label":"cup","rect":[1,2,3,4],"bbox":[0,0,1,1]}</answer>)", keys);
    expect_flags(p, true, true, true);
    EXPECT_EQ(*p.name, "cup");
    EXPECT_FALSE(parse_completion(R"(<answer>{"target_object":"cup","bbox":[1,2,3,4]}</answer>)", keys).flags.keys);
}

TEST(ParseCompletion, FloatBoxAcceptedStringsRejected) {
    auto p = parse_completion(R"(<answer>{"target_object":"cup","bbox":[1.5,2,3e1,4]}</answer>)");
    EXPECT_TRUE(p.flags.keys);
    EXPECT_EQ(*p.raw_box, (RawBox4{1.5, 2, 30, 4}));
    p = parse_completion(R"(<answer>{"target_object":"cup","bbox":["1",2,3,4]}</answer>)");
    expect_flags(p, true, true, false);
    EXPECT_TRUE(p.name);
    EXPECT_FALSE(p.raw_box);
}

TEST(ParseCompletion, WrongArityOrTypeLeavesFieldUnresolved) {
    auto p = parse_completion(R"(<answer>{"target_object":"cup","bbox":[1,2,3]}</answer>)");
    expect_flags(p, true, true, false);
    p = parse_completion(R"(<answer>{"target_object":7,"bbox":[1,2,3,4]}</answer>)");
    expect_flags(p, true, true, false);
    EXPECT_FALSE(p.name);
    EXPECT_TRUE(p.raw_box);
}

TEST(ParseCompletion, FirstBalancedObjectWithBracesInStrings) {
    const auto p = parse_completion(
        R"(<answer>prefix {"target_object":"a } tricky {","bbox":[1,2,3,4]} {"target_object":"second"}</answer>)");
    expect_flags(p, true, true, true);
    EXPECT_EQ(*p.name, "a } tricky {");
}

TEST(ParseCompletion, ArrayIsNotAnObject) {
    expect_flags(parse_completion("<answer>[1,2,3]</answer>"), true, false, false);
}

TEST(ParseCompletion, ExtraAnswerSpansFirstWins) {
    const auto p = parse_completion(R"(<answer>{"target_object":"a","bbox":[1,2,3,4]}</answer>)"
                                    R"(<answer>{"target_object":"b","bbox":[5,6,7,8]}</answer>)");
    EXPECT_EQ(*p.name, "a");
    EXPECT_EQ(p.extra_answer_spans, 1u);
    EXPECT_TRUE(to_json(p).contains("warnings"));
}

TEST(ParseCompletion, ObjectOutsideSpanIgnored) {
    const auto p = parse_completion(R"(<answer>nothing here</answer>{"target_object":"cup","bbox":[1,2,3,4]})");
    expect_flags(p, true, false, false);
}

TEST(ParseCompletion, DroppingCloseTagClearsAllFlags) {
    const std::string good = render_completion("why", "cup", {5, 5, 20, 20});
    ASSERT_TRUE(parse_completion(good).flags.keys);
    std::string broken = good;
    broken.erase(broken.find("</answer>"), 9);
    expect_flags(parse_completion(broken), false, false, false);
}

TEST(RenderCompletion, RoundTrip) {
    const auto text = render_completion("because it pours", "cup", {5, 5, 20, 20});
    const auto p = parse_completion(text);
    expect_flags(p, true, true, true);
    EXPECT_EQ(*p.name, "cup");
    EXPECT_EQ(*p.raw_box, (RawBox4{5, 5, 20, 20}));
    EXPECT_EQ(*p.think_span, "because it pours");
}

TEST(RenderCompletion, QuoteIsEscaped) {
    const std::string name = "12\" ruler";
    const auto text = render_completion("", name, {0, 0, 3, 4});
    EXPECT_NE(text.find("\\\""), std::string::npos);
    const auto p = parse_completion(text);
    EXPECT_EQ(*p.name, name);
    EXPECT_EQ(*p.think_span, "");
}

TEST(RenderCompletion, AngleBracketsCannotCloseSpan) {
    const std::string name = "</answer><answer>{}";
    const auto p = parse_completion(render_completion("t", name, {1, 1, 2, 2}));
    expect_flags(p, true, true, true);
    EXPECT_EQ(*p.name, name);
    EXPECT_EQ(p.extra_answer_spans, 0u);
}

TEST(RenderCompletion, PropertyRoundTripRandomNames) {
    CounterRng rng(2024);
    const std::string alphabet = "abcXYZ019 _-\"\\/{}[]<>:,.'";
    const std::string multibyte[] = {"\xC3\xA9", "\xE6\x9D\xAF", "\xF0\x9F\x8D\xB5"};
    for (int trial = 0; trial < 3000; ++trial) {
        std::string name;
        const auto len = 1 + rng.below(24);
        for (std::uint64_t i = 0; i < len; ++i) {
            if (rng.below(8) == 0) name += multibyte[rng.below(3)];
            else name += alphabet[rng.below(alphabet.size())];
        }
        const BoundingBox box{static_cast<std::int64_t>(rng.below(5000)), static_cast<std::int64_t>(rng.below(5000)),
                              static_cast<std::int64_t>(1 + rng.below(5000)),
                              static_cast<std::int64_t>(1 + rng.below(5000))};
        const auto p = parse_completion(render_completion("r", name, box));
        ASSERT_TRUE(p.flags.keys) << name;
        ASSERT_EQ(*p.name, name);
        ASSERT_EQ(*p.raw_box, (RawBox4{static_cast<double>(box.x), static_cast<double>(box.y),
                                       static_cast<double>(box.w), static_cast<double>(box.h)}));
    }
}

TEST(ParseCompletion, FuzzArbitraryBytes) {
    CounterRng rng(99);
    const std::string pieces[] = {"<answer>", "</answer>", "<think>", "</think>", "{", "}", "\"", "\\",
                                  "[1,2,3,4]", "\"bbox\":", "\"target_object\":", ",", ":", "\xFF", "\xC3"};
    for (int trial = 0; trial < 4000; ++trial) {
        std::string s;
        const auto parts = rng.below(40);
        for (std::uint64_t i = 0; i < parts; ++i) {
            if (rng.below(3) == 0) s.push_back(static_cast<char>(rng.below(256)));
            else s += pieces[rng.below(std::size(pieces))];
        }
        const auto p = parse_completion(s);
        expect_flag_implications(p);
    }
}

TEST(ParseCompletion, LargeAdversarialInputsTerminate) {
    const std::size_t mib = 1u << 20;
    const std::string cases[] = {
        "<answer>" + std::string(mib - 20, '{') + "</answer>",
        "<answer>" + std::string(mib / 2, '[') + std::string(mib / 2 - 20, ']') + "</answer>",
        std::string(mib, '<'),
        "<answer>{\"" + std::string(mib - 20, '\\') + "</answer>",
    };
    for (const auto& s : cases) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto p = parse_completion(s);
        expect_flag_implications(p);
        EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 5.0);
    }
    std::string nested = "<answer>{\"a\":";
    for (int i = 0; i < 100000; ++i) nested += "{\"a\":";
    nested += "1" + std::string(100001, '}') + "</answer>";
    expect_flag_implications(parse_completion(nested));
}
