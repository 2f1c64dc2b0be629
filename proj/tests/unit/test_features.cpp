#include "deepoformer/errors.hpp"
#include "deepoformer/features.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace deepoformer;
using deepoformer::testing::make_record;

namespace {

// Direct transcriptions of the three log-ratios, independent of the library.
double stussi_oracle(double uts, double s, double fs) { return std::log10((uts - s) / (s - fs + 100.0)); }
double weibull_oracle(double uts, double s, double fs) { return std::log10((uts - fs) / (s - fs + 100.0)); }
double pm_oracle(double s, double fs) { return std::log10(fs / (s - fs + 100.0)); }

template <class F>
std::string domain_message(F f) {
    try {
        f();
    } catch (const DomainError& e) {
        return e.what();
    }
    ADD_FAILURE() << "expected DomainError";
    return {};
}

}  // namespace

TEST(Stussi, WorkedValues) {
    EXPECT_NEAR(stussi_feature(500, 300, 200), 0.0, 1e-12);
    EXPECT_NEAR(stussi_feature(470, 200, 150), stussi_oracle(470, 200, 150), 1e-9);
    EXPECT_NEAR(stussi_feature(470, 200, 150), 0.255273, 5e-7);
}

TEST(Stussi, ZeroNumeratorIsDomainError) {
    const std::string msg = domain_message([] { stussi_feature(300, 300, 100); });
    EXPECT_NE(msg.find("UTS"), std::string::npos) << msg;
}

TEST(Stussi, NonPositiveDenominatorIsDomainError) {
    EXPECT_THROW(stussi_feature(500, 40, 150), DomainError);
}

TEST(Weibull, WorkedValues) {
    EXPECT_NEAR(weibull_feature(500, 300, 200), weibull_oracle(500, 300, 200), 1e-9);
    EXPECT_NEAR(weibull_feature(500, 300, 200), 0.176091, 5e-7);
    EXPECT_NEAR(weibull_feature(400, 300, 150), 0.0, 1e-12);
}

TEST(Weibull, ZeroNumeratorIsDomainError) { EXPECT_THROW(weibull_feature(200, 300, 200), DomainError); }

TEST(Pm, WorkedValues) {
    EXPECT_NEAR(pm_feature(300, 200), 0.0, 1e-12);
    EXPECT_NEAR(pm_feature(250, 150), pm_oracle(250, 150), 1e-9);
    EXPECT_NEAR(pm_feature(250, 150), -0.124939, 5e-7);
}

TEST(Pm, NegativeDenominatorIsDomainError) {
    const std::string msg = domain_message([] { pm_feature(40, 150); });
    EXPECT_FALSE(msg.empty());
    EXPECT_THROW(pm_feature(200, 0), DomainError);
}

TEST(Features, NaturalLogScalesByLn10) {
    const double ten = stussi_feature(470, 200, 150, LogBase::ten);
    const double e = stussi_feature(470, 200, 150, LogBase::natural);
    EXPECT_NEAR(e, ten * std::log(10.0), 1e-12);
}

TEST(Features, ShiftMakesDenominatorHundredAtFatigueStrength) {
    // sigma_a == fs: every ratio has denominator exactly 100.
    EXPECT_NEAR(stussi_feature(500, 150, 150), std::log10(350.0 / 100.0), 1e-12);
    EXPECT_NEAR(weibull_feature(500, 150, 150), std::log10(350.0 / 100.0), 1e-12);
    EXPECT_NEAR(pm_feature(150, 150), std::log10(150.0 / 100.0), 1e-12);
}

TEST(TrunkFeatures, SigmaCubed) {
    EXPECT_EQ(make_trunk_features(500, 200, 150).sigma_a_cubed, 8.0e6);
}

TEST(TrunkFeatures, ComposedRecord) {
    const auto t = make_trunk_features(make_record(1, 500, 300, 200, "T6", -1, 300, 6));
    EXPECT_EQ(t.sigma_a, 300);
    EXPECT_EQ(t.sigma_a_cubed, 2.7e7);
    EXPECT_NEAR(t.stussi, 0.0, 1e-12);
    EXPECT_NEAR(t.weibull, 0.176091, 5e-7);
    EXPECT_NEAR(t.pm, 0.0, 1e-12);
}

TEST(TrunkFeatures, Pure) {
    const auto r = make_record(1, 480, 300, 170, "T6", -1, 260, 6);
    EXPECT_EQ(make_trunk_features(r), make_trunk_features(r));
}

TEST(BranchFeatures, TemperLookup) {
    TemperVocabulary vocab;
    vocab.add("T6");
    const auto b = make_branch_features(make_record(1, 500, 300, 200, "T6", 0.1, 300, 6), vocab);
    EXPECT_EQ(b.temper_id, 1);
    EXPECT_EQ(b.continuous(), (std::array<double, 4>{500, 300, 200, 0.1}));
    EXPECT_EQ(make_branch_features(make_record(1, 500, 300, 200, "O", 0.1, 300, 6), vocab).temper_id, 0);
}

// Fixed uts and fs, random valid sigma pairs: all three ratios fall as
// sigma_a grows.
TEST(FeatureProperties, DecreasingInStress) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 10000; ++i) {
        const double uts = 200 + 500 * u(rng);
        const double fs = 20 + (uts - 30) * u(rng);
        const double lo = std::max(1.0, fs - 99.0);
        double s1 = lo + (uts - lo) * u(rng), s2 = lo + (uts - lo) * u(rng);
        if (s1 == s2) continue;
        if (s1 > s2) std::swap(s1, s2);
        ASSERT_GT(stussi_feature(uts, s1, fs), stussi_feature(uts, s2, fs)) << uts << ' ' << s1 << ' ' << s2;
        ASSERT_GT(pm_feature(s1, fs), pm_feature(s2, fs));
        ASSERT_GT(weibull_feature(uts, s1, fs), weibull_feature(uts, s2, fs));
    }
}

TEST(FeatureProperties, MatchOracleOnRandomTriples) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 10000; ++i) {
        const double uts = 200 + 500 * u(rng);
        const double fs = 20 + (uts - 30) * u(rng);
        const double lo = std::max(1.0, fs - 99.0);
        const double s = lo + (uts - lo) * u(rng);
        if (s >= uts) continue;
        ASSERT_NEAR(stussi_feature(uts, s, fs), stussi_oracle(uts, s, fs), 1e-9);
        ASSERT_NEAR(weibull_feature(uts, s, fs), weibull_oracle(uts, s, fs), 1e-9);
        ASSERT_NEAR(pm_feature(s, fs), pm_oracle(s, fs), 1e-9);
    }
}

TEST(Standardizer, TwoPointPopulationStd) {
    const std::vector<std::vector<double>> rows{{1.0}, {3.0}};
    const auto s = Standardizer::fit(rows);
    EXPECT_EQ(s.mean()[0], 2.0);
    EXPECT_EQ(s.stddev()[0], 1.0);
    EXPECT_EQ(s.apply(0, 3.0), 1.0);
}

TEST(Standardizer, ConstantColumnGetsUnitStd) {
    const std::vector<std::vector<double>> rows{{5.0}, {5.0}, {5.0}};
    const auto s = Standardizer::fit(rows);
    EXPECT_EQ(s.stddev()[0], 1.0);
    EXPECT_EQ(s.apply(0, 5.0), 0.0);
}

TEST(Standardizer, EmptyOrRaggedRejected) {
    EXPECT_THROW(Standardizer::fit(std::vector<std::vector<double>>{}), ArgumentError);
    const std::vector<std::vector<double>> ragged{{1.0, 2.0}, {3.0}};
    EXPECT_THROW(Standardizer::fit(ragged), ArgumentError);
}

TEST(Standardizer, InverseIsIdentity) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(100.0, 40.0);
    std::vector<std::vector<double>> rows(50, std::vector<double>(3));
    for (auto& r : rows)
        for (double& v : r) v = n(rng);
    const auto s = Standardizer::fit(rows);
    for (auto r : rows) {
        const auto original = r;
        s.apply_inplace(r);
        s.inverse_inplace(r);
        for (std::size_t c = 0; c < r.size(); ++c) EXPECT_NEAR(r[c], original[c], 1e-12);
    }
}

TEST(FeatureColumns, CheckAgainstStored) {
    std::vector<SNCurve> curves{{1, {make_record(1, 500, 300, 200, "T6", -1, 300, 6),
                                     make_record(1, 500, 300, 200, "T6", -1, 250, 6.5)}}};
    const auto cols = compute_feature_columns(curves);
    ASSERT_EQ(cols.size(), 2u);
    curves[0].records[0].stored = cols[0];
    curves[0].records[1].stored = cols[1];
    EXPECT_TRUE(check_stored_features(curves).empty());

    curves[0].records[1].stored.weibull = *cols[1].weibull + 1e-3;
    const auto bad = check_stored_features(curves);
    ASSERT_EQ(bad.size(), 1u);
    EXPECT_EQ(bad[0].column, "Weibull");
    EXPECT_EQ(bad[0].curve_id, 1);
}

TEST(FeatureColumns, EmptyColumnsAreSkipped) {
    std::vector<SNCurve> curves{{1, {make_record(1, 500, 300, 200, "T6", -1, 300, 6)}}};
    EXPECT_TRUE(check_stored_features(curves).empty());
}
