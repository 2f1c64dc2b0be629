#include "deepoformer/dataset.hpp"
#include "deepoformer/errors.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <random>
#include <sstream>

using namespace deepoformer;
using deepoformer::testing::kCsvHeader;
using deepoformer::testing::make_record;
using deepoformer::testing::TempDir;

namespace {

std::string row(int id, double uts, double sigma, const std::string& temper = "T6", double log_n = 6.0) {
    std::ostringstream s;
    s << id << ',' << uts << ",300,150," << temper << ",-1," << sigma << ",,,,," << log_n << '\n';
    return s.str();
}

DatasetLoadResult parse(const std::string& text) {
    std::istringstream in(text);
    return read_dataset(in);
}

template <class E>
std::string message_of(const std::string& text) {
    try {
        parse(text);
    } catch (const E& e) {
        return e.what();
    }
    ADD_FAILURE() << "expected an exception";
    return {};
}

std::vector<SNCurve> curves_with_ids(int n) {
    std::vector<SNCurve> curves;
    for (int i = 1; i <= n; ++i) curves.push_back({i, {make_record(i, 500, 300, 150, "T6", -1, 200, 6)}});
    return curves;
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST(LoadDataset, GroupsRowsIntoCurves) {
    // 41 curves of 5 rows and 13 of 4 rows: 54 curves, 257 rows.
    std::string text = kCsvHeader;
    for (int id = 1; id <= 54; ++id) {
        const int n = id <= 41 ? 5 : 4;
        for (int k = 0; k < n; ++k) text += row(id, 500, 160 + 10 * k);
    }
    const auto result = parse(text);
    EXPECT_EQ(result.curves.size(), 54u);
    EXPECT_EQ(record_count(result.curves), 257u);
    EXPECT_EQ(result.curves.front().records.size(), 5u);
    EXPECT_EQ(result.curves.back().records.size(), 4u);
}

TEST(LoadDataset, SingleRow) {
    const auto result = parse(std::string(kCsvHeader) + row(7, 500, 200));
    ASSERT_EQ(result.curves.size(), 1u);
    EXPECT_EQ(result.curves[0].curve_id, 7);
    ASSERT_EQ(result.curves[0].records.size(), 1u);
    EXPECT_EQ(result.curves[0].records[0].source_row, 2u);
}

TEST(LoadDataset, KeepsFileOrderAcrossInterleavedCurves) {
    const auto result = parse(std::string(kCsvHeader) + row(3, 500, 200) + row(1, 500, 210) + row(3, 500, 220));
    ASSERT_EQ(result.curves.size(), 2u);
    EXPECT_EQ(result.curves[0].curve_id, 3);
    EXPECT_EQ(result.curves[1].curve_id, 1);
    ASSERT_EQ(result.curves[0].records.size(), 2u);
    EXPECT_EQ(result.curves[0].records[1].sigma_a, 220);
}

TEST(LoadDataset, SigmaAtOrAboveUtsCitesRow) {
    const std::string msg = message_of<ValidationError>(std::string(kCsvHeader) + row(1, 500, 200) + row(2, 470, 500));
    EXPECT_NE(msg.find("row 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("UTS"), std::string::npos) << msg;
}

TEST(LoadDataset, MissingColumnNamesColumn) {
    const std::string msg =
        message_of<SchemaError>("curve_id,UTS,TYS,FatigueStrength,Temper,R,sigma_a,sigma_a3,Stussi,Weibull,PM\n");
    EXPECT_NE(msg.find("logN"), std::string::npos) << msg;
}

TEST(LoadDataset, NonNumericCellCitesRow) {
    const std::string msg = message_of<ParseError>(std::string(kCsvHeader) + "1,abc,300,150,T6,-1,200,,,,,6\n");
    EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("UTS"), std::string::npos) << msg;
}

TEST(LoadDataset, CurveConstantsMustAgree) {
    const std::string text = std::string(kCsvHeader) + row(1, 500, 200) + row(1, 510, 210);
    EXPECT_THROW(parse(text), ValidationError);
}

TEST(LoadDataset, NonPositiveStrengthRejected) {
    EXPECT_THROW(parse(std::string(kCsvHeader) + "1,500,0,150,T6,-1,200,,,,,6\n"), ValidationError);
}

TEST(LoadDataset, LifeOutsideHighCycleRangeOnlyWarns) {
    const auto result = parse(std::string(kCsvHeader) + row(1, 500, 200, "T6", 3.0));
    EXPECT_EQ(result.curves.size(), 1u);
    ASSERT_EQ(result.warnings.size(), 1u);
    EXPECT_NE(result.warnings[0].find("row 2"), std::string::npos);
}

TEST(LoadDataset, ColumnOrderIsFree) {
    const auto result =
        parse("logN,curve_id,Temper,UTS,TYS,FatigueStrength,R,sigma_a,PM,Weibull,Stussi,sigma_a3\n"
              "6.5,4,T4,500,300,150,0.1,200,,,,\n");
    ASSERT_EQ(result.curves.size(), 1u);
    const FatigueRecord& r = result.curves[0].records[0];
    EXPECT_EQ(r.curve_id, 4);
    EXPECT_EQ(r.temper, "T4");
    EXPECT_EQ(r.stress_ratio_r, 0.1);
    EXPECT_EQ(r.log_n, 6.5);
}

TEST(LoadDataset, StoredFeaturesKeptButOptional) {
    const auto result = parse(std::string(kCsvHeader) + "1,500,300,150,T6,-1,200,8000000,0.5,,,6\n");
    const FatigueRecord& r = result.curves[0].records[0];
    EXPECT_EQ(r.stored.sigma_a3, 8e6);
    EXPECT_EQ(r.stored.stussi, 0.5);
    EXPECT_FALSE(r.stored.weibull.has_value());
}

TEST(LoadDataset, EmptyInputIsSchemaError) { EXPECT_THROW(parse(""), SchemaError); }

TEST(LoadDataset, MissingFileIsIoError) {
    EXPECT_THROW(load_dataset("/nonexistent/dir/data.csv"), IoError);
}

TEST(DatasetRoundTrip, BitIdenticalNumericFields) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<SNCurve> curves;
    for (int id = 1; id <= 20; ++id) {
        SNCurve c{id, {}};
        const double uts = 300 + 300 * u(rng), tys = uts * (0.6 + 0.3 * u(rng)), fs = 80 + 100 * u(rng);
        const double r = u(rng) < 0.5 ? -1.0 : 0.1 * u(rng);
        for (int k = 0; k < 4; ++k) {
            c.records.push_back(make_record(id, uts, tys, fs, "T" + std::to_string(id % 3), r,
                                            fs + (uts - fs) * u(rng) * 0.9, 4 + 6 * u(rng)));
        }
        curves.push_back(c);
    }
    TempDir dir;
    write_dataset(dir / "d.csv", curves);
    const auto back = load_dataset(dir / "d.csv");
    ASSERT_EQ(back.size(), curves.size());
    for (std::size_t i = 0; i < curves.size(); ++i) {
        ASSERT_EQ(back[i].records.size(), curves[i].records.size());
        for (std::size_t k = 0; k < curves[i].records.size(); ++k) {
            const FatigueRecord &a = curves[i].records[k], &b = back[i].records[k];
            EXPECT_EQ(a.curve_id, b.curve_id);
            EXPECT_EQ(a.temper, b.temper);
            for (auto [x, y] : {std::pair{a.uts, b.uts}, {a.tys, b.tys}, {a.fatigue_strength, b.fatigue_strength},
                                {a.stress_ratio_r, b.stress_ratio_r}, {a.sigma_a, b.sigma_a}, {a.log_n, b.log_n}}) {
                EXPECT_TRUE(bit_equal(x, y)) << x << " vs " << y;
            }
        }
    }
}

TEST(DatasetRoundTrip, FeatureColumnsWrittenWhenGiven) {
    std::vector<SNCurve> curves{{1, {make_record(1, 500, 300, 200, "T6", -1, 300, 6)}}};
    std::vector<StoredFeatures> features{{2.7e7, 0.0, 0.25, -0.5}};
    std::ostringstream out;
    write_dataset(out, curves, features);
    std::istringstream in(out.str());
    const auto back = read_dataset(in);
    EXPECT_EQ(back.curves[0].records[0].stored.sigma_a3, 2.7e7);
    EXPECT_EQ(back.curves[0].records[0].stored.pm, -0.5);
}

TEST(DatasetRoundTrip, FeatureCountMismatchRejected) {
    std::vector<SNCurve> curves{{1, {make_record(1, 500, 300, 200, "T6", -1, 300, 6)}}};
    std::vector<StoredFeatures> features(2);
    std::ostringstream out;
    EXPECT_THROW(write_dataset(out, curves, features), ArgumentError);
}

TEST(FormatDouble, ShortestRoundTrip) {
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(format_double(6.0), "6");
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
        const double v = u(rng);
        EXPECT_TRUE(bit_equal(std::stod(format_double(v)), v));
    }
}

TEST(Vocabulary, FirstAppearanceOrder) {
    std::vector<SNCurve> curves;
    for (const char* t : {"T851", "T6", "T851"}) {
        curves.push_back({static_cast<int>(curves.size()) + 1,
                          {make_record(static_cast<int>(curves.size()) + 1, 500, 300, 150, t, -1, 200, 6)}});
    }
    const auto vocab = build_temper_vocabulary(curves);
    EXPECT_EQ(vocab.size(), 3u);
    EXPECT_EQ(vocab.id("<unknown>"), 0);
    EXPECT_EQ(vocab.id("T851"), 1);
    EXPECT_EQ(vocab.id("T6"), 2);
    EXPECT_EQ(vocab.token(0), CategoryVocabulary::kUnknownToken);
}

TEST(Vocabulary, EmptyCurveList) {
    const auto vocab = build_temper_vocabulary({});
    EXPECT_EQ(vocab.size(), 1u);
    EXPECT_EQ(vocab.tokens()[0], CategoryVocabulary::kUnknownToken);
}

TEST(Vocabulary, UnseenTokenFallsBackToUnknown) {
    std::vector<SNCurve> curves{{1, {make_record(1, 500, 300, 150, "T6", -1, 200, 6)}}};
    EXPECT_EQ(build_temper_vocabulary(curves).id("T4"), CategoryVocabulary::kUnknownId);
}

TEST(Vocabulary, DeterministicForSameOrder) {
    const auto curves = curves_with_ids(5);
    EXPECT_EQ(build_temper_vocabulary(curves), build_temper_vocabulary(curves));
}

TEST(Vocabulary, TokenOutOfRangeThrows) {
    CategoryVocabulary vocab;
    EXPECT_THROW(vocab.token(3), ArgumentError);
}

TEST(SplitCurves, CountsMatchRequest) {
    const auto curves = curves_with_ids(54);
    const CurveSplit split = split_curves(curves, 7, 2);
    EXPECT_EQ(split.train_curve_ids.size(), 47u);
    EXPECT_EQ(split.test_curve_ids.size(), 7u);
    EXPECT_EQ(split.seed, 2u);
}

TEST(SplitCurves, SameSeedSameSplit) {
    const auto curves = curves_with_ids(2);
    const auto a = split_curves(curves, 1, 9), b = split_curves(curves, 1, 9);
    EXPECT_EQ(a.test_curve_ids, b.test_curve_ids);
    EXPECT_EQ(a.train_curve_ids, b.train_curve_ids);
}

TEST(SplitCurves, OutOfRangeCountRejected) {
    const auto curves = curves_with_ids(54);
    EXPECT_THROW(split_curves(curves, 54, 1), ArgumentError);
    EXPECT_THROW(split_curves(curves, 0, 1), ArgumentError);
}

TEST(SplitCurves, DisjointAndCoveringForManySeeds) {
    const auto curves = curves_with_ids(30);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto split = split_curves(curves, 5, seed);
        std::set<int> all = split.train_curve_ids;
        for (int id : split.test_curve_ids) {
            EXPECT_FALSE(split.train_curve_ids.count(id));
            all.insert(id);
        }
        EXPECT_EQ(all.size(), 30u);
    }
}

TEST(SplitCurves, ExplicitIds) {
    const auto curves = curves_with_ids(4);
    const auto split = split_curves(curves, std::set<int>{2, 4});
    EXPECT_EQ(split.test_curve_ids, (std::set<int>{2, 4}));
    EXPECT_EQ(split.train_curve_ids, (std::set<int>{1, 3}));
    EXPECT_THROW(split_curves(curves, std::set<int>{9}), ArgumentError);
    EXPECT_THROW(split_curves(curves, std::set<int>{1, 2, 3, 4}), ArgumentError);
}

TEST(SplitCurves, RecordsNeverSeparated) {
    std::vector<SNCurve> curves;
    for (int id = 1; id <= 10; ++id) {
        SNCurve c{id, {}};
        for (int k = 0; k < 3; ++k) c.records.push_back(make_record(id, 500, 300, 150, "T6", -1, 200 + k, 6));
        curves.push_back(c);
    }
    const auto split = split_curves(curves, 3, 4);
    const auto train = train_records(curves, split);
    const auto test = test_curves(curves, split);
    EXPECT_EQ(train.size(), 21u);
    EXPECT_EQ(test.size(), 3u);
    for (const auto& r : train) EXPECT_FALSE(split.is_test(r.curve_id));
    for (const auto& c : test) {
        EXPECT_TRUE(split.is_test(c.curve_id));
        EXPECT_EQ(c.records.size(), 3u);
    }
}

TEST(SplitManifest, JsonRoundTrip) {
    const auto curves = curves_with_ids(12);
    const auto split = split_curves(curves, 3, 77);
    TempDir dir;
    save_split(split, dir / "split.json");
    const auto back = load_split(dir / "split.json");
    EXPECT_EQ(back.seed, 77u);
    EXPECT_EQ(back.train_curve_ids, split.train_curve_ids);
    EXPECT_EQ(back.test_curve_ids, split.test_curve_ids);
}

TEST(SplitManifest, OverlapAndGarbageRejected) {
    EXPECT_THROW(split_from_json(R"({"seed":1,"train_curve_ids":[1,2],"test_curve_ids":[2]})"), ValidationError);
    EXPECT_THROW(split_from_json("not json"), ParseError);
}

TEST(ValidateCurve, EmptyCurveRejected) { EXPECT_THROW(validate_curve(SNCurve{1, {}}), ValidationError); }
