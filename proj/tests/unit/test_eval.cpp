#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "groundkit/eval.hpp"
#include "groundkit/rng.hpp"

using namespace groundkit;

namespace {

const std::string kData = GROUNDKIT_TEST_DATA;

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RscRecord gt_record(const std::string& id, TagVector tags = {}) {
    RscRecord r;
    r.record_id = id;
    r.image = {"im_" + id, 100, 100, std::nullopt};
    r.scenario = "s";
    r.category = "cup";
    r.bbox = {0, 0, 100, 100};
    r.aliases = {"cup", "mug"};
    r.expression = "e";
    r.trace = "t";
    r.tags = tags;
    return r;
}

std::string answer(const std::string& name, int w, int h = 100) {
    return R"(<answer>{"target_object":")" + name + R"(","bbox":[0,0,)" + std::to_string(w) + "," +
           std::to_string(h) + "]}</answer>";
}

} // namespace

TEST(Evaluate, MicroDataset) {
    std::vector<RscRecord> gts;
    Predictions preds;
    const int widths[] = {80, 60, 40, 55};
    for (int i = 0; i < 4; ++i) {
        const std::string id = "r" + std::to_string(i);
        gts.push_back(gt_record(id));
        preds[id] = answer("cup", widths[i]);
    }
    const auto rep = evaluate(preds, gts);
    EXPECT_NEAR(rep.overall.miou, 0.5875, 1e-12);
    EXPECT_DOUBLE_EQ(rep.overall.acc50, 0.75);
    EXPECT_DOUBLE_EQ(rep.overall.acc70, 0.25);
    EXPECT_DOUBLE_EQ(rep.overall.cat_acc, 1.0);
    EXPECT_EQ(rep.overall.missing, 0u);
}

TEST(Evaluate, GoldenReport) {
    const auto gts = read_rsc_records(kData + "/eval_gt.jsonl").records;
    const auto preds = read_predictions(kData + "/eval_preds.jsonl");
    const auto rep = evaluate(preds, gts);
    EXPECT_EQ(render_report(rep, ReportFormat::csv), slurp(kData + "/eval_report.csv"));
}

TEST(Evaluate, MarkdownMirrorsCsv) {
    const auto gts = read_rsc_records(kData + "/eval_gt.jsonl").records;
    const auto rep = evaluate(read_predictions(kData + "/eval_preds.jsonl"), gts);
    const auto md = render_report(rep, ReportFormat::markdown);
    EXPECT_EQ(md.rfind("| slice | n | missing | mIoU |", 0), 0u);
    EXPECT_NE(md.find("| --- | --- | --- | ---: |"), std::string::npos);
    EXPECT_NE(md.find("| overall | 5 | 1 | 47.00 | 60.00 | 20.00 | 60.00 | 40.00 |"), std::string::npos);
    EXPECT_EQ(std::count(md.begin(), md.end(), '\n'), 2 + 14);
}

TEST(Evaluate, ModesBlankUnscoredColumns) {
    const auto gts = read_rsc_records(kData + "/eval_gt.jsonl").records;
    const auto preds = read_predictions(kData + "/eval_preds.jsonl");
    const auto box = evaluate(preds, gts, EvalMode::box_only);
    EXPECT_EQ(box.overall.cat_acc, 0.0);
    EXPECT_DOUBLE_EQ(box.overall.miou, 0.47);
    EXPECT_NE(render_report(box, ReportFormat::csv).find("overall,5,1,47.00,60.00,20.00,-,-"), std::string::npos);
    const auto cat = evaluate(preds, gts, EvalMode::category_only);
    EXPECT_EQ(cat.overall.miou, 0.0);
    EXPECT_DOUBLE_EQ(cat.overall.cat_acc, 0.6);
    EXPECT_NE(render_report(cat, ReportFormat::csv).find("overall,5,1,-,-,-,60.00,40.00"), std::string::npos);
    EXPECT_EQ(eval_mode_from_string("box_only"), EvalMode::box_only);
    EXPECT_THROW(eval_mode_from_string("both"), ValidationError);
    EXPECT_THROW(report_format_from_string("html"), ValidationError);
}

TEST(Evaluate, EmptyGroundTruthGivesHeaderOnly) {
    const auto rep = evaluate({}, {});
    EXPECT_EQ(rep.overall.n, 0u);
    EXPECT_EQ(render_report(rep, ReportFormat::csv), "slice,n,missing,mIoU,Acc@0.5,Acc@0.7,CatAcc,CatAcc_canonical\n");
}

TEST(Evaluate, MissingAndUnmatchedPredictions) {
    std::vector<RscRecord> gts{gt_record("a"), gt_record("b")};
    Predictions preds{{"a", answer("cup", 100)}, {"zzz", answer("cup", 100)}};
    const auto rep = evaluate(preds, gts);
    EXPECT_EQ(rep.overall.n, 2u);
    EXPECT_EQ(rep.overall.missing, 1u);
    EXPECT_DOUBLE_EQ(rep.overall.miou, 0.5);
}

TEST(Evaluate, DuplicateGroundTruthRejected) {
    EXPECT_THROW(evaluate({}, {gt_record("a"), gt_record("a")}), ValidationError);
}

TEST(ReadPredictions, Errors) {
    std::istringstream dup(R"({"record_id":"a","completion":"x"})"
                           "\n\n"
                           R"({"record_id":"a","completion":"y"})");
    try {
        read_predictions(dup);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos);
    }
    std::istringstream bad("{not json");
    EXPECT_THROW(read_predictions(bad), ParseError);
    std::istringstream no_completion(R"({"record_id":"a"})");
    EXPECT_THROW(read_predictions(no_completion), ParseError);
    std::istringstream int_id(R"({"record_id":7,"completion":"x"})");
    EXPECT_EQ(read_predictions(int_id).count("7"), 1u);
    EXPECT_THROW(read_predictions(std::string("/nonexistent/preds.jsonl")), ParseError);
}

TEST(CompensatedSum, RecoversSmallTerms) {
    CompensatedSum s;
    s.add(1.0);
    for (int i = 0; i < 1000; ++i) s.add(1e-16);
    s.add(-1.0);
    EXPECT_NEAR(s.value(), 1e-13, 1e-20);
}

// ---------------------------------------------------------------------------
// Properties on random datasets
// ---------------------------------------------------------------------------

namespace {

struct RandomSet {
    std::vector<RscRecord> gts;
    Predictions preds;
};

RandomSet random_set(std::uint64_t seed, std::size_t n) {
    CounterRng rng(seed);
    const char* names[] = {"cup", "mug", "plate", "", "Cup "};
    RandomSet out;
    for (std::size_t i = 0; i < n; ++i) {
        TagVector t;
        t.U = 1 + static_cast<int>(rng.below(2));
        t.C = 1 + static_cast<int>(rng.below(3));
        t.S = static_cast<SizeBin>(rng.below(3));
        t.O = static_cast<int>(rng.below(3));
        t.P = static_cast<int>(rng.below(2));
        const std::string id = "r" + std::to_string(i);
        out.gts.push_back(gt_record(id, t));
        if (rng.below(10) != 0)
            out.preds[id] = answer(names[rng.below(5)], 1 + static_cast<int>(rng.below(100)),
                                   1 + static_cast<int>(rng.below(100)));
    }
    return out;
}

} // namespace

TEST(EvaluateProperty, PerAxisCountsSumToTotal) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto set = random_set(seed, 300);
        const auto rep = evaluate(set.preds, set.gts);
        ASSERT_EQ(rep.per_tag.size(), 13u);
        std::array<std::size_t, 5> sums{}, missing{};
        std::size_t k = 0;
        for (TagAxis a : kTagAxes)
            for (std::size_t b = 0; b < axis_size(a); ++b, ++k) {
                sums[static_cast<std::size_t>(a)] += rep.per_tag[k].second.n;
                missing[static_cast<std::size_t>(a)] += rep.per_tag[k].second.missing;
            }
        for (std::size_t a = 0; a < 5; ++a) {
            EXPECT_EQ(sums[a], rep.overall.n);
            EXPECT_EQ(missing[a], rep.overall.missing);
        }
    }
}

TEST(EvaluateProperty, AccuracyMonotoneInThreshold) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto set = random_set(100 + seed, 200);
        const auto rep = evaluate(set.preds, set.gts);
        EXPECT_GE(rep.overall.acc50, rep.overall.acc70);
        EXPECT_GE(rep.overall.cat_acc, rep.overall.cat_acc_canonical);
        for (const auto& [label, m] : rep.per_tag) {
            EXPECT_GE(m.acc50, m.acc70) << label;
            EXPECT_GE(m.cat_acc, m.cat_acc_canonical) << label;
            EXPECT_GE(m.miou, 0.0);
            EXPECT_LE(m.miou, 1.0);
        }
    }
}

TEST(EvaluateProperty, InvariantToRecordOrder) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto set = random_set(200 + seed, 250);
        const auto a = to_json(evaluate(set.preds, set.gts)).dump();
        CounterRng rng(seed);
        for (std::size_t i = set.gts.size(); i > 1; --i) std::swap(set.gts[i - 1], set.gts[rng.below(i)]);
        EXPECT_EQ(to_json(evaluate(set.preds, set.gts)).dump(), a);
    }
}

TEST(EvaluateProperty, MatchesDirectInstanceScoring) {
    const auto set = random_set(7, 400);
    const auto rep = evaluate(set.preds, set.gts);
    double iou_sum = 0.0;
    std::size_t hits = 0, cat = 0;
    for (const auto& gt : set.gts) {
        const auto it = set.preds.find(gt.record_id);
        const auto s = score_instance(it == set.preds.end() ? nullptr : &it->second, gt);
        iou_sum += s.iou;
        hits += s.iou >= 0.5;
        cat += s.cat_correct;
    }
    EXPECT_NEAR(rep.overall.miou, iou_sum / 400.0, 1e-12);
    EXPECT_DOUBLE_EQ(rep.overall.acc50, static_cast<double>(hits) / 400.0);
    EXPECT_DOUBLE_EQ(rep.overall.cat_acc, static_cast<double>(cat) / 400.0);
}
