#include <gtest/gtest.h>

#include <sstream>

#include "groundkit/dataset.hpp"
#include "groundkit/rng.hpp"

using namespace groundkit;

namespace {

json one_image_doc(json bbox) {
    json doc = json::parse(R"({"images":[{"id":1,"width":100,"height":100}],
                               "categories":[{"id":3,"name":"cup"}]})");
    doc["annotations"] = {{{"id", 10}, {"image_id", 1}, {"category_id", 3}, {"bbox", std::move(bbox)}}};
    return doc;
}

RscRecord sample_record(int i) {
    RscRecord r;
    r.record_id = "r" + std::to_string(i);
    r.image = {"img" + std::to_string(i), 640, 480, std::nullopt};
    r.scenario = "I need something to hold my coffee";
    r.category = "cup";
    r.bbox = {10, 20, 30, 40};
    r.aliases = {"cup", "mug"};
    r.expression = "the white one on the left";
    r.trace = "coffee needs a container";
    r.tags = {2, 3, SizeBin::M, 1, 1};
    r.difficulty = 0.25;
    return r;
}

std::string random_text(CounterRng& rng) {
    static const char* pieces[] = {"a", "Z", " ", "\"", "\\", "\n", "\t", "é", "日本", "🙂", "<", "}", "0"};
    std::string s;
    const auto n = rng.below(12);
    for (std::uint64_t i = 0; i < n; ++i) s += pieces[rng.below(13)];
    return s;
}

} // namespace

TEST(SourcePool, IdentityIngestion) {
    const auto pool = parse_source_pool(one_image_doc({10, 10, 20, 20}));
    ASSERT_EQ(pool.instances.size(), 1u);
    EXPECT_EQ(pool.instances[0].bbox, (BoundingBox{10, 10, 20, 20}));
    EXPECT_EQ(pool.instances[0].category_name, "cup");
    EXPECT_EQ(pool.instances[0].instance_id, "10");
}

TEST(SourcePool, ClipsBoxes) {
    const auto pool = parse_source_pool(one_image_doc({-5, -5, 200, 200}));
    EXPECT_EQ(pool.instances[0].bbox, (BoundingBox{0, 0, 100, 100}));
}

TEST(SourcePool, DanglingImageNamesAnnotation) {
    auto doc = one_image_doc({1, 1, 2, 2});
    doc["annotations"][0]["image_id"] = 99;
    try {
        parse_source_pool(doc);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("annotation 10"), std::string::npos) << e.what();
    }
}

TEST(SourcePool, MalformedRecordIsParseError) {
    auto doc = one_image_doc({1, 1, 2});
    EXPECT_THROW(parse_source_pool(doc), ParseError);
}

TEST(SourcePool, DedupByContentHashAndInstance) {
    auto doc = json::parse(R"({"images":[{"id":1,"width":10,"height":10,"content_hash":"h"},
                                         {"id":2,"width":10,"height":10,"content_hash":"h"}],
                               "annotations":[{"id":5,"image_id":1,"category_id":1,"bbox":[0,0,2,2]},
                                              {"id":5,"image_id":2,"category_id":1,"bbox":[0,0,2,2]},
                                              {"id":6,"image_id":2,"category_id":1,"bbox":[0,0,2,2]}]})");
    const auto pool = parse_source_pool(doc);
    EXPECT_EQ(pool.instances.size(), 2u);
    EXPECT_EQ(pool.duplicates_dropped, 1u);
}

TEST(Records, RoundTripThreeRecords) {
    std::vector<RscRecord> recs = {sample_record(0), sample_record(1), sample_record(2)};
    recs[1].image.content_hash = "abc";
    recs[2].difficulty = 0.1 + 0.2;
    std::stringstream ss;
    write_rsc_records(recs, ss);
    const auto back = read_rsc_records(ss);
    EXPECT_TRUE(back.issues.empty());
    EXPECT_EQ(back.records, recs);
}

TEST(Records, RoundTripProperty) {
    CounterRng rng(17);
    std::vector<RscRecord> recs;
    for (int i = 0; i < 300; ++i) {
        RscRecord r = sample_record(i);
        r.scenario = random_text(rng);
        r.expression = random_text(rng);
        r.trace = random_text(rng);
        r.category = "cat" + std::to_string(rng.below(5));
        r.aliases = {random_text(rng), r.category};
        r.image.width = 1 + static_cast<std::int64_t>(rng.below(1000));
        r.image.height = 1 + static_cast<std::int64_t>(rng.below(1000));
        r.bbox = {0, 0, 1 + static_cast<std::int64_t>(rng.below(r.image.width)),
                  1 + static_cast<std::int64_t>(rng.below(r.image.height))};
        r.difficulty = rng.uniform();
        r.tags = {1 + static_cast<int>(rng.below(2)), 1 + static_cast<int>(rng.below(3)),
                  static_cast<SizeBin>(rng.below(3)), static_cast<int>(rng.below(3)), static_cast<int>(rng.below(2))};
        recs.push_back(r);
    }
    std::stringstream ss;
    write_rsc_records(recs, ss);
    EXPECT_EQ(read_rsc_records(ss).records, recs);
}

TEST(Records, CategoryMustBeAnAlias) {
    auto r = sample_record(0);
    r.aliases = {"mug"};
    EXPECT_EQ(validate(r), std::optional<std::string>("category not in aliases"));
    std::stringstream ss;
    EXPECT_THROW(write_rsc_records({r}, ss), ValidationError);
    ss.str(to_json(r).dump() + "\n");
    EXPECT_THROW(read_rsc_records(ss), ValidationError);
}

TEST(Records, DifficultyRange) {
    auto r = sample_record(0);
    r.difficulty = 1.2;
    std::stringstream ss(to_json(r).dump() + "\n");
    EXPECT_THROW(read_rsc_records(ss), ValidationError);
}

TEST(Records, LenientModeSkipsAndReports) {
    auto bad = sample_record(1);
    bad.difficulty = -0.5;
    std::stringstream ss(to_json(sample_record(0)).dump() + "\n" + to_json(bad).dump() + "\nnot json\n\n" +
                         to_json(sample_record(2)).dump() + "\n");
    const auto res = read_rsc_records(ss, ReadMode::lenient);
    EXPECT_EQ(res.records.size(), 2u);
    ASSERT_EQ(res.issues.size(), 2u);
    EXPECT_EQ(res.issues[0].line_no, 2u);
    EXPECT_EQ(res.issues[1].line_no, 3u);
}
