#include "deepoformer/errors.hpp"
#include "deepoformer/evaluation.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace deepoformer;
using deepoformer::testing::lines_of;
using deepoformer::testing::make_record;
using deepoformer::testing::read_file;
using deepoformer::testing::TempDir;

namespace {

const std::vector<double> kY{1, 2, 3}, kPred{1.1, 1.9, 3.2};

// Scalar-loop references in extended precision.
long double r2_oracle(const std::vector<double>& y, const std::vector<double>& p) {
    long double mean = 0, res = 0, tot = 0;
    for (double v : y) mean += v;
    mean /= y.size();
    for (std::size_t i = 0; i < y.size(); ++i) {
        res += (y[i] - static_cast<long double>(p[i])) * (y[i] - static_cast<long double>(p[i]));
        tot += (y[i] - mean) * (y[i] - mean);
    }
    return 1 - res / (tot + 1e-12L);
}

long double mae_oracle(const std::vector<double>& y, const std::vector<double>& p) {
    long double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += std::fabs(y[i] - static_cast<long double>(p[i]));
    return s / y.size();
}

long double mre_oracle(const std::vector<double>& y, const std::vector<double>& p) {
    long double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const long double a = std::pow(10.0L, y[i]), b = std::pow(10.0L, static_cast<long double>(p[i]));
        s += std::fabs(a - b) / (a + 1e-12L);
    }
    return s / y.size();
}

SNCurve curve(int id, std::vector<double> sigmas, double log_n0 = 7.0) {
    SNCurve c{id, {}};
    for (std::size_t i = 0; i < sigmas.size(); ++i)
        c.records.push_back(make_record(id, 500, 350, 150, "T6", -1, sigmas[i], log_n0 - 0.5 * i));
    return c;
}

SeedOutcome outcome(std::size_t index, std::vector<double> preds, std::vector<std::vector<double>> curves,
                    const std::vector<double>& truth) {
    SeedEvaluation e;
    e.metrics = compute_metrics(truth, preds);
    e.test_predictions = std::move(preds);
    e.curve_predictions = std::move(curves);
    return {index, 10 + index, e, {}};
}

}  // namespace

TEST(RSquared, WorkedValues) {
    EXPECT_NEAR(r_squared(kY, kY), 1.0, 1e-15);
    EXPECT_NEAR(r_squared(kY, kPred), 0.97, 1e-12);
    EXPECT_NEAR(r_squared(kY, std::vector<double>{2, 2, 2}), 0.0, 1e-12);
}

TEST(RSquared, Preconditions) {
    EXPECT_THROW(r_squared(std::vector<double>{1}, std::vector<double>{1}), ArgumentError);
    EXPECT_THROW(r_squared(kY, std::vector<double>{1, 2}), ArgumentError);
}

TEST(RSquared, ConstantTargetsStayFinite) {
    const double r2 = r_squared(std::vector<double>{5, 5}, std::vector<double>{5, 5});
    EXPECT_EQ(r2, 1.0);
}

TEST(Mae, WorkedValues) {
    EXPECT_EQ(mae(kY, kY), 0.0);
    EXPECT_NEAR(mae(kY, kPred), 0.4 / 3, 1e-15);
    EXPECT_NEAR(mae(kY, kPred), 0.133333, 5e-7);
    EXPECT_EQ(mae(std::vector<double>{5}, std::vector<double>{4}), 1.0);
    EXPECT_THROW(mae(kY, std::vector<double>{1}), ArgumentError);
}

TEST(Mre, WorkedValues) {
    EXPECT_EQ(mre(kY, kY), 0.0);
    EXPECT_NEAR(mre(kY, kPred), 0.349830, 5e-7);
    EXPECT_NEAR(mre(std::vector<double>{0}, std::vector<double>{1}), 9.0 / (1.0 + kMetricEpsilon), 1e-15);
    EXPECT_NEAR(mre(std::vector<double>{0}, std::vector<double>{1}), 9.0, 1e-10);
    // Per-element terms of the worked triple.
    EXPECT_NEAR(mre(std::vector<double>{1}, std::vector<double>{1.1}), 0.258925, 5e-7);
    EXPECT_NEAR(mre(std::vector<double>{2}, std::vector<double>{1.9}), 0.205672, 5e-7);
    EXPECT_NEAR(mre(std::vector<double>{3}, std::vector<double>{3.2}), 0.584893, 5e-7);
}

TEST(Mre, OverflowNamesIndex) {
    try {
        mre(std::vector<double>{2, 400}, std::vector<double>{2, 3});
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos) << e.what();
    }
}

TEST(Metrics, MatchOraclesOnRandomVectors) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(3.0, 9.0), noise(-0.5, 0.5);
    std::uniform_int_distribution<int> len(2, 40);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = len(rng);
        std::vector<double> y(n), p(n);
        for (int i = 0; i < n; ++i) {
            y[i] = u(rng);
            p[i] = y[i] + noise(rng);
        }
        const MetricSet m = compute_metrics(y, p);
        ASSERT_NEAR(m.r2, static_cast<double>(r2_oracle(y, p)), 1e-12);
        ASSERT_NEAR(m.mae, static_cast<double>(mae_oracle(y, p)), 1e-12);
        ASSERT_NEAR(m.mre, static_cast<double>(mre_oracle(y, p)), 1e-12);
    }
}

TEST(MetricProperties, PerfectPredictionBounds) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(3.0, 9.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> y(10), p(10);
        for (int i = 0; i < 10; ++i) y[i] = u(rng), p[i] = u(rng);
        EXPECT_LE(r_squared(y, p), 1.0);
        EXPECT_GE(mae(y, p), 0.0);
        EXPECT_GE(mre(y, p), 0.0);
    }
}

TEST(MeanStd, PopulationStd) {
    const MeanStd m = mean_std(std::vector<double>{0.9, 1.1});
    EXPECT_NEAR(m.mean, 1.0, 1e-15);
    EXPECT_NEAR(m.stddev, 0.1, 1e-15);
    EXPECT_EQ(mean_std(std::vector<double>{0.4}).stddev, 0.0);
    EXPECT_THROW(mean_std(std::vector<double>{}), ArgumentError);
}

TEST(CurveGrid, ObservedPlusDenseSorted) {
    const SNCurve c = curve(1, {300, 200, 250});
    const auto grid = curve_grid(c, 5);
    ASSERT_EQ(grid.size(), 8u);
    for (std::size_t i = 1; i < grid.size(); ++i) EXPECT_LE(grid[i - 1].sigma_a, grid[i].sigma_a);
    std::size_t observed = 0;
    for (const auto& g : grid) observed += g.true_log_n.has_value();
    EXPECT_EQ(observed, 3u);
    EXPECT_EQ(grid.front().sigma_a, 200);
    EXPECT_EQ(grid.back().sigma_a, 300);
    EXPECT_EQ(curve_grid(c, 0).size(), 3u);
}

TEST(Aggregate, SingleSeedHasCollapsedBand) {
    const std::vector<SNCurve> test{curve(4, {200, 250})};
    const std::vector<std::vector<GridPoint>> grids{curve_grid(test[0], 2)};
    const std::vector<double> truth{7.0, 6.5};
    const std::vector<SeedOutcome> outs{outcome(0, {7.1, 6.4}, {{7.1, 7.1, 6.4, 6.4}}, truth)};
    const RunReport r = aggregate("full", test, grids, outs);
    ASSERT_TRUE(r.aggregate.has_value());
    EXPECT_EQ(r.aggregate->r2.stddev, 0.0);
    for (const auto& p : r.scatter) {
        EXPECT_EQ(p.lo(), p.mean);
        EXPECT_EQ(p.hi(), p.mean);
    }
    EXPECT_EQ(r.band_coverage, 0.0);
}

TEST(Aggregate, BandsAndFailures) {
    const std::vector<SNCurve> test{curve(4, {200, 250})};
    const std::vector<std::vector<GridPoint>> grids{curve_grid(test[0], 0)};
    const std::vector<double> truth{7.0, 6.5};
    std::vector<SeedOutcome> outs{outcome(0, {6.9, 6.5}, {{6.9, 6.5}}, truth),
                                  SeedOutcome{1, 11, std::nullopt, "diverged"},
                                  outcome(2, {7.1, 6.7}, {{7.1, 6.7}}, truth)};
    const RunReport r = aggregate("full", test, grids, outs);
    EXPECT_EQ(r.completed, 2u);
    EXPECT_FALSE(r.all_completed());
    EXPECT_EQ(r.seeds[1].error, "diverged");
    ASSERT_EQ(r.scatter.size(), 2u);
    EXPECT_NEAR(r.scatter[0].mean, 7.0, 1e-15);
    EXPECT_NEAR(r.scatter[0].stddev, 0.1, 1e-12);
    EXPECT_NEAR(r.scatter[1].mean, 6.6, 1e-15);
    // 7.0 lies inside 7.0 +- 0.2; 6.5 lies inside 6.6 +- 0.2.
    EXPECT_EQ(r.band_coverage, 1.0);
    ASSERT_EQ(r.curves.size(), 1u);
    EXPECT_EQ(r.curves[0].points[0].per_seed, (std::vector<double>{6.9, 7.1}));
}

TEST(Aggregate, AllFailedLeavesNoAggregate) {
    const std::vector<SNCurve> test{curve(4, {200, 250})};
    const std::vector<std::vector<GridPoint>> grids{curve_grid(test[0], 0)};
    const std::vector<SeedOutcome> outs{SeedOutcome{0, 1, std::nullopt, "x"}};
    const RunReport r = aggregate("full", test, grids, outs);
    EXPECT_FALSE(r.aggregate.has_value());
    EXPECT_THROW(aggregate("full", test, grids, {}), ArgumentError);
}

TEST(Export, FilesAndFormats) {
    const std::vector<SNCurve> test{curve(4, {200, 250}), curve(9, {180, 220, 260})};
    const std::vector<std::vector<GridPoint>> grids{curve_grid(test[0], 3), curve_grid(test[1], 3)};
    const std::vector<double> truth{7.0, 6.5, 7.0, 6.5, 6.0};
    std::vector<SeedOutcome> outs{
        outcome(0, {7, 6.5, 7, 6.4, 6.1}, {std::vector<double>(5, 6.8), std::vector<double>(6, 6.6)}, truth),
        SeedOutcome{1, 11, std::nullopt, "diverged"}};
    RunReport r = aggregate("mlp_branch", test, grids, outs);
    TempDir dir;
    export_report(r, dir / "out");

    const auto metrics = lines_of(read_file(dir / "out/metrics.csv"));
    ASSERT_EQ(metrics.size(), 5u);
    EXPECT_EQ(metrics[0], "repetition,seed,status,r2,mae,mre");
    EXPECT_EQ(metrics[1].rfind("0,10,ok,", 0), 0u);
    EXPECT_EQ(metrics[2], "1,11,failed,,,");
    EXPECT_EQ(metrics[3].rfind("mean,,1,", 0), 0u);
    EXPECT_EQ(metrics[4], "std,,1,0,0,0");

    const auto c4 = lines_of(read_file(dir / "out/curve_4.csv"));
    EXPECT_EQ(c4[0], "sigma_a,mean_logN,lo,hi,true_logN");
    EXPECT_EQ(c4.size(), 6u);
    EXPECT_TRUE(std::filesystem::exists(dir / "out/curve_9.csv"));
    const auto scatter = lines_of(read_file(dir / "out/scatter.csv"));
    EXPECT_EQ(scatter[0], "curve_id,sigma_a,true,pred_mean,pred_lo,pred_hi");
    EXPECT_EQ(scatter.size(), 6u);

    const ReportSummary s = load_summary(dir / "out/summary.json");
    EXPECT_EQ(s.variant, "mlp_branch");
    EXPECT_EQ(s.repetitions, 2u);
    EXPECT_EQ(s.completed, 1u);
    ASSERT_TRUE(s.aggregate.has_value());
    EXPECT_EQ(s.aggregate->mae.mean, r.aggregate->mae.mean);
}

TEST(Export, UnwritableDirectoryIsIoError) {
    TempDir dir;
    deepoformer::testing::write_file(dir / "file", "x");
    RunReport r;
    EXPECT_THROW(export_report(r, dir / "file" / "sub"), IoError);
}

TEST(ReportTable, OneRowPerVariant) {
    std::vector<ReportSummary> rows{
        {"full", 10, 10, MetricSummary{{0.95, 0.01}, {0.2, 0.02}, {0.5, 0.1}}, 0.7},
        {"direct_regressor", 10, 0, std::nullopt, 0.0}};
    const auto lines = lines_of(format_report_table(rows));
    ASSERT_EQ(lines.size(), 3u);
    EXPECT_NE(lines[0].find("R2"), std::string::npos);
    EXPECT_NE(lines[1].find("0.9500 +- 0.0100"), std::string::npos) << lines[1];
    EXPECT_NE(lines[1].find("10/10"), std::string::npos);
    EXPECT_NE(lines[2].find("0/10"), std::string::npos);
}

TEST(ReportTable, WideCellsStaySeparated) {
    std::vector<ReportSummary> rows{
        {"mlp_branch", 3, 3, MetricSummary{{0.28, 0.3}, {0.8, 0.08}, {143.8346, 180.7132}}, 0.1}};
    const auto lines = lines_of(format_report_table(rows));
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_NE(lines[1].find("180.7132 3/3"), std::string::npos) << lines[1];
}

TEST(Summary, BadFilesRejected) {
    TempDir dir;
    deepoformer::testing::write_file(dir / "s.json", R"({"format": "other"})");
    EXPECT_THROW(load_summary(dir / "s.json"), ParseError);
    EXPECT_THROW(load_summary(dir / "missing.json"), IoError);
}
