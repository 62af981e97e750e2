#include <gtest/gtest.h>

#include <cmath>

#include "groundkit/completion.hpp"
#include "groundkit/config.hpp"
#include "groundkit/reward.hpp"
#include "groundkit/rng.hpp"

using namespace groundkit;

namespace {

// Reference values computed separately in float64 from the closed-form
// component definitions.
constexpr double kConcentricRIou = 0.7063636706856788;
constexpr double kDisjointRIou = 8.18675957206112e-07;
constexpr double kFallbackRIou = -0.049064862453031696;
constexpr double kMalformedStage1Total = -0.07679864683977378;
constexpr double kCompositeRIou = 0.6703254368716489;
constexpr double kCompositeTotal = 0.7686789902794069;

GroundTruth centered_gt() {
    GroundTruth gt;
    gt.bbox = {40, 40, 20, 20};
    gt.canonical = {"mug"};
    gt.aliases = {"mug", "coffee mug", "cup"};
    gt.width = 100;
    gt.height = 100;
    return gt;
}

RawBox4 raw(const BoundingBox& b) {
    return {static_cast<double>(b.x), static_cast<double>(b.y), static_cast<double>(b.w), static_cast<double>(b.h)};
}

} // namespace

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

TEST(GeometryReward, PerfectBoxCapsAtOne) {
    const BoundingBox gt{10, 20, 30, 40};
    const auto g = geometry_reward(raw(gt), gt, 100, 100, {});
    EXPECT_EQ(g.r_iou, 1.0);
    EXPECT_EQ(g.iou, 1.0);
    EXPECT_FALSE(g.oob);
}

TEST(GeometryReward, ConcentricHalfOverlap) {
    const auto g = geometry_reward({15, 15, 70, 70}, {25, 25, 50, 50}, 100, 100, {});
    EXPECT_NEAR(g.iou, 2500.0 / 4900.0, 1e-15);
    EXPECT_NEAR(g.r_iou, kConcentricRIou, 1e-12);
    EXPECT_NEAR(g.r_iou, 0.706, 5e-4);
}

TEST(GeometryReward, DisjointFarBoxNearZero) {
    const auto g = geometry_reward({90, 90, 10, 10}, {0, 0, 10, 10}, 100, 100, {});
    EXPECT_EQ(g.iou, 0.0);
    EXPECT_LT(g.r_iou, 0.01);
    EXPECT_NEAR(g.r_iou, kDisjointRIou, 1e-15);
}

TEST(GeometryReward, FallbackBoxIsPenalised) {
    const auto gt = centered_gt();
    const auto g = geometry_reward(kFallbackBox, gt.bbox, 100, 100, {});
    EXPECT_TRUE(g.oob);
    EXPECT_EQ(g.box, (BoundingBox{0, 0, 1, 1}));
    EXPECT_NEAR(g.r_iou, kFallbackRIou, 1e-15);
}

TEST(GeometryReward, MonotoneInIou) {
    const GeometryParams p;
    for (double d : {0.0, 0.1, 0.5}) {
        for (bool oob : {false, true}) {
            double prev = -1e9;
            for (int i = 0; i <= 10000; ++i) {
                const double v = geometry_reward_value(i / 10000.0, d, oob, p);
                EXPECT_GE(v, prev);
                prev = v;
            }
        }
    }
}

TEST(GeometryReward, LogisticSaturatesWithoutOverflow) {
    EXPECT_EQ(logistic(1e6), 1.0);
    EXPECT_EQ(logistic(-1e6), 1.0 / (1.0 + std::exp(700.0)));
    EXPECT_DOUBLE_EQ(logistic(0.0), 0.5);
}

TEST(GeometryReward, ParamsValidated) {
    GeometryParams p;
    p.tau1 = 0.8;
    EXPECT_THROW(p.validate(), ValidationError);
    p = {};
    p.kappa = 0;
    EXPECT_THROW(p.validate(), ValidationError);
    p = {};
    p.sigma_c = -1;
    EXPECT_THROW(p.validate(), ValidationError);
}

// ---------------------------------------------------------------------------
// Category
// ---------------------------------------------------------------------------

TEST(CategoryReward, CanonicalMatch) {
    const auto r = category_reward("cup", {"cup"}, {"cup"}, 0.6, {});
    EXPECT_EQ(r.r_cat, 1.0);
    EXPECT_EQ(r.tier, CategoryTier::canonical);
}

TEST(CategoryReward, AliasCredit) {
    const auto r = category_reward("coffee mug", {"cup"}, {"cup", "coffee mug"}, 0.6, {});
    EXPECT_EQ(r.r_cat, 0.8);
    EXPECT_EQ(r.tier, CategoryTier::alias);
}

TEST(CategoryReward, SoftOverlapBelowGate) {
    const auto r = category_reward("mug", {"coffee mug"}, {"coffee mug"}, 0.2, {});
    EXPECT_EQ(r.tier, CategoryTier::soft);
    EXPECT_NEAR(r.r_cat, 0.5 * (0.40 + 0.30 * 0.5), 1e-15);
    EXPECT_NEAR(r.r_cat, 0.275, 1e-15);
}

TEST(CategoryReward, NormalizationAppliesToMatches) {
    EXPECT_EQ(category_reward("  Coffee-Mugs ", {"coffee mug"}, {}, 0.9, {}).tier, CategoryTier::canonical);
    EXPECT_EQ(category_reward("boxes", {"box"}, {}, 0.9, {}).tier, CategoryTier::canonical);
}

TEST(CategoryReward, EmptyNameGetsBase) {
    EXPECT_DOUBLE_EQ(category_reward("", {"cup"}, {"cup"}, 0.9, {}).r_cat, 0.40);
    EXPECT_DOUBLE_EQ(category_reward("", {"cup"}, {"cup"}, 0.0, {}).r_cat, 0.20);
}

TEST(CategoryReward, GateIdentity) {
    const CategoryParams p;
    const char* preds[] = {"cup", "coffee mug", "mug", "red mug", "", "kettle"};
    for (const char* pred : preds) {
        const auto hi = category_reward(pred, {"cup"}, {"cup", "coffee mug"}, 0.31, p);
        const auto lo = category_reward(pred, {"cup"}, {"cup", "coffee mug"}, 0.29, p);
        EXPECT_EQ(lo.r_cat, p.gate * hi.r_cat) << pred;
    }
}

TEST(CategoryReward, GateAtThresholdIsOpen) {
    EXPECT_EQ(category_reward("cup", {"cup"}, {}, 0.30, {}).gate, 1.0);
}

// ---------------------------------------------------------------------------
// Format, structure and weights
// ---------------------------------------------------------------------------

TEST(FormatStructure, Table) {
    const StructureParams sp;
    EXPECT_EQ(format_reward({true, true, true}), 1.0);
    EXPECT_EQ(format_reward({true, true, false}), 1.0);
    EXPECT_EQ(format_reward({true, false, false}), -1.0);
    EXPECT_EQ(format_reward({false, false, false}), -1.0);
    EXPECT_EQ(structure_reward({true, true, true}, sp), 1.0);
    EXPECT_EQ(structure_reward({true, true, false}, sp), 0.25);
    EXPECT_EQ(structure_reward({false, false, false}, sp), 0.0);
}

TEST(FormatStructure, FloorNeverBindsWithDefaults) {
    const StructureParams sp;
    for (int m = 0; m < 8; ++m) EXPECT_GE(structure_reward({(m & 1) != 0, (m & 2) != 0, (m & 4) != 0}, sp), 0.0);
}

TEST(AnnealedWeights, Endpoints) {
    const auto s2 = WeightSchedule::stage2();
    EXPECT_EQ(annealed_weights(0, 1000, s2), (RewardWeights{0.55, 0.25, 0.12, 0.08}));
    EXPECT_EQ(annealed_weights(600, 1000, s2), (RewardWeights{0.75, 0.20, 0.04, 0.01}));
    EXPECT_EQ(annealed_weights(999, 1000, s2), (RewardWeights{0.75, 0.20, 0.04, 0.01}));
    const auto s1 = WeightSchedule::stage1();
    for (std::int64_t step : {0, 300, 999}) EXPECT_EQ(annealed_weights(step, 1000, s1), (RewardWeights{0.75, 0.15, 0.07, 0.03}));
}

TEST(AnnealedWeights, Midpoint) {
    const auto w = annealed_weights(300, 1000, WeightSchedule::stage2());
    EXPECT_NEAR(w.iou, 0.65, 1e-15);
    EXPECT_NEAR(w.cat, 0.225, 1e-15);
    EXPECT_NEAR(w.fmt, 0.08, 1e-15);
    EXPECT_NEAR(w.structure, 0.045, 1e-15);
}

TEST(AnnealedWeights, BetweenEndpointsAndSumToOne) {
    const auto s = WeightSchedule::stage2();
    for (std::int64_t step = 0; step <= 1200; ++step) {
        const auto w = annealed_weights(step, 1000, s);
        const std::pair<double, double> ranges[] = {{s.start.iou, s.late.iou},
                                                    {s.start.cat, s.late.cat},
                                                    {s.start.fmt, s.late.fmt},
                                                    {s.start.structure, s.late.structure}};
        const double vals[] = {w.iou, w.cat, w.fmt, w.structure};
        for (int k = 0; k < 4; ++k) {
            EXPECT_GE(vals[k], std::min(ranges[k].first, ranges[k].second));
            EXPECT_LE(vals[k], std::max(ranges[k].first, ranges[k].second));
        }
        EXPECT_NEAR(w.sum(), 1.0, 1e-12);
    }
}

TEST(AnnealedWeights, RejectsBadSteps) {
    EXPECT_THROW(annealed_weights(-1, 10, WeightSchedule::stage1()), ValidationError);
    EXPECT_THROW(annealed_weights(0, 0, WeightSchedule::stage1()), ValidationError);
}

// ---------------------------------------------------------------------------
// Totals
// ---------------------------------------------------------------------------

TEST(ScoreCompletion, PerfectStageOneIsOne) {
    const auto gt = centered_gt();
    const auto text = render_completion("fits", "mug", gt.bbox);
    const auto b = score_completion(text, gt, {0, 100, WeightSchedule::stage1()});
    EXPECT_NEAR(b.total, 1.0, 1e-12);
    EXPECT_EQ(b.r_iou, 1.0);
    EXPECT_EQ(b.r_cat, 1.0);
    EXPECT_EQ(b.r_fmt, 1.0);
    EXPECT_EQ(b.r_struct, 1.0);
}

TEST(ScoreCompletion, MalformedStageOne) {
    const auto b = score_completion("I am not sure.", centered_gt(), {0, 100, WeightSchedule::stage1()});
    EXPECT_EQ(b.flags, (ParseFlags{false, false, false}));
    EXPECT_TRUE(b.oob);
    EXPECT_EQ(b.iou, 0.0);
    EXPECT_NEAR(b.r_cat, 0.20, 1e-15);
    EXPECT_EQ(b.r_fmt, -1.0);
    EXPECT_EQ(b.r_struct, 0.0);
    EXPECT_NEAR(b.total, 0.75 * kFallbackRIou + 0.15 * 0.20 - 0.07, 1e-15);
    EXPECT_NEAR(b.total, kMalformedStage1Total, 1e-15);
}

TEST(ScoreCompletion, CompositeAliasHalfOverlap) {
    const auto gt = centered_gt();
    const auto text = render_completion("it holds tea", "coffee mug", {40, 40, 10, 20});
    const auto b = score_completion(text, gt, {0, 100, WeightSchedule::stage2()});
    EXPECT_NEAR(b.iou, 0.5, 1e-15);
    EXPECT_NEAR(b.r_iou, kCompositeRIou, 1e-13);
    EXPECT_EQ(b.r_cat, 0.8);
    EXPECT_EQ(b.tier, CategoryTier::alias);
    EXPECT_NEAR(b.total, 0.55 * kCompositeRIou + 0.25 * 0.8 + 0.12 + 0.08, 1e-13);
    EXPECT_NEAR(b.total, kCompositeTotal, 1e-13);
}

TEST(ScoreCompletion, DeterministicBitIdentical) {
    const auto gt = centered_gt();
    const std::string text = R"(<answer>{"object":"cups","box":[41.6,39.2,63.1,58.8]}</answer>)";
    const StepContext ctx{37, 120, WeightSchedule::stage2()};
    EXPECT_EQ(score_completion(text, gt, ctx), score_completion(text, gt, ctx));
}

TEST(ScoreCompletion, BoundsFuzz) {
    CounterRng rng(1234);
    const RewardParams params;
    const std::string names[] = {"mug", "coffee mug", "cup", "kettle", "", "Mugs", "tea cup"};
    for (int trial = 0; trial < 100000; ++trial) {
        GroundTruth gt;
        gt.width = 1 + static_cast<std::int64_t>(rng.below(800));
        gt.height = 1 + static_cast<std::int64_t>(rng.below(800));
        const auto x = static_cast<std::int64_t>(rng.below(gt.width));
        const auto y = static_cast<std::int64_t>(rng.below(gt.height));
        gt.bbox = {x, y, 1 + static_cast<std::int64_t>(rng.below(gt.width - x)),
                   1 + static_cast<std::int64_t>(rng.below(gt.height - y))};
        gt.canonical = {"mug"};
        gt.aliases = {"coffee mug"};
        ParsedAnswer p;
        p.flags.tag = rng.below(4) != 0;
        p.flags.json = p.flags.tag && rng.below(4) != 0;
        if (p.flags.json && rng.below(5) != 0) p.name = names[rng.below(std::size(names))];
        if (p.flags.json && rng.below(5) != 0) {
            RawBox4 r;
            for (auto& v : r) v = (rng.uniform() * 2.0 - 0.5) * 900.0;
            if (rng.below(50) == 0) r[rng.below(4)] = std::nan("");
            p.raw_box = r;
        }
        p.flags.keys = p.name.has_value() && p.raw_box.has_value();
        const auto b = score_parsed(p, gt, {static_cast<std::int64_t>(rng.below(200)), 100,
                                            rng.below(2) ? WeightSchedule::stage1() : WeightSchedule::stage2()},
                                    params);
        ASSERT_GE(b.r_iou, -params.geometry.alpha_oob);
        ASSERT_LE(b.r_iou, 1.0);
        ASSERT_GE(b.r_cat, 0.0);
        ASSERT_LE(b.r_cat, 1.0);
        ASSERT_TRUE(b.r_fmt == 1.0 || b.r_fmt == -1.0);
        ASSERT_GE(b.r_struct, 0.0);
        ASSERT_LE(b.r_struct, params.structure.gamma_tag + params.structure.gamma_key);
        ASSERT_GE(b.iou, 0.0);
        ASSERT_LE(b.iou, 1.0);
        ASSERT_TRUE(std::isfinite(b.total));
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

TEST(EngineConfig, DefaultsMatchPublishedValues) {
    const EngineConfig c;
    EXPECT_EQ(c.reward.geometry.tau1, 0.50);
    EXPECT_EQ(c.reward.geometry.tau2, 0.70);
    EXPECT_EQ(c.reward.geometry.kappa, 0.03);
    EXPECT_EQ(c.reward.geometry.alpha_oob, 0.05);
    EXPECT_EQ(c.reward.category.eta, 0.80);
    EXPECT_EQ(c.reward.structure.gamma_min, -0.50);
    EXPECT_EQ(c.schedules[1].late, (RewardWeights{0.75, 0.20, 0.04, 0.01}));
    EXPECT_EQ(c.kl[0].kappa_tgt, 0.13);
    EXPECT_EQ(c.kl[1].mu_up, 1.6);
}

TEST(EngineConfig, JsonOverridesAndValidation) {
    const auto c = config_from_json(nlohmann::json::parse(R"({
        "geometry": {"alpha_oob": 0.1, "strict_oob": true},
        "category": {"eta": 0.7},
        "weights": {"p_anneal": 0.5, "stage1": {"start": {"w_iou": 0.5, "w_cat": 0.3, "w_fmt": 0.1, "w_struct": 0.1}}},
        "kl": {"beta0": 0.01, "stage2": {"kappa_tgt": 0.2}},
        "curriculum": {"stage1": [0.5, 0.5, 0.0]},
        "parser": {"name_keys": ["label"]}
    })"));
    EXPECT_EQ(c.reward.geometry.alpha_oob, 0.1);
    EXPECT_TRUE(c.reward.geometry.strict_oob);
    EXPECT_EQ(c.reward.category.eta, 0.7);
    EXPECT_EQ(c.schedules[0].start.iou, 0.5);
    EXPECT_EQ(c.schedules[0].late, c.schedules[0].start);
    EXPECT_EQ(c.schedules[1].p_anneal, 0.5);
    EXPECT_EQ(c.kl[0].beta, 0.01);
    EXPECT_EQ(c.kl[1].kappa_tgt, 0.2);
    EXPECT_EQ(c.kl[0].kappa_tgt, 0.13);
    EXPECT_EQ(c.reward.keys.name_keys, std::vector<std::string>{"label"});

    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"geometry":{"tau1":"x"}})")), ParseError);
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"geometry":{"tau1":0.9}})")), ValidationError);
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"curriculum":{"stage2":[0.5,0.6,0.0]}})")), ValidationError);
    EXPECT_THROW(config_from_json(nlohmann::json::parse("[1]")), ParseError);
}

TEST(EngineConfig, ShippedDefaultFileLoads) {
    const auto c = load_config(std::string(GROUNDKIT_TEST_DATA) + "/../../data/default_config.json");
    const EngineConfig d;
    EXPECT_EQ(c.schedules[1].start, d.schedules[1].start);
    EXPECT_EQ(c.reward.geometry.sigma_c, d.reward.geometry.sigma_c);
    EXPECT_EQ(c.kl[1].kappa_tgt, d.kl[1].kappa_tgt);
}
