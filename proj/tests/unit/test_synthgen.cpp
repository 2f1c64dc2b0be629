#include "deepoformer/errors.hpp"
#include "deepoformer/features.hpp"
#include "deepoformer/synthgen.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace deepoformer;
using deepoformer::testing::read_file;
using deepoformer::testing::TempDir;

namespace {

SynthCurveSpec spec(int id = 1) {
    SynthCurveSpec s;
    s.curve_id = id;
    s.intercept = 12;
    s.slope = 3;
    s.uts = 500;
    s.tys = 400;
    s.fatigue_strength = 90;
    s.temper = "T6";
    s.n_points = 4;
    s.sigma_lo = 100;
    s.sigma_hi = 300;
    return s;
}

}  // namespace

TEST(Basquin, ClosedForm) { EXPECT_DOUBLE_EQ(basquin_log_life(12, 3, 100), 6.0); }

TEST(LogSpaced, EndpointsAndRatio) {
    const auto v = log_spaced(100, 1000, 3);
    ASSERT_EQ(v.size(), 3u);
    EXPECT_DOUBLE_EQ(v[0], 100);
    EXPECT_NEAR(v[1], std::sqrt(1e5), 1e-9);
    EXPECT_DOUBLE_EQ(v[2], 1000);
    EXPECT_EQ(log_spaced(100, 1000, 1), std::vector<double>{100});
}

TEST(Generate, NoiselessFollowsBasquin) {
    SynthCurveSpec s = spec();
    s.sigma_lo = s.sigma_hi = 100;
    s.n_points = 1;
    const auto curves = generate(std::vector{s}, 1);
    ASSERT_EQ(curves.size(), 1u);
    EXPECT_DOUBLE_EQ(curves[0].records[0].log_n, 6.0);
}

TEST(Generate, FeatureColumnsFilled) {
    const auto curves = generate(std::vector{spec()}, 1);
    const auto recomputed = compute_feature_columns(curves);
    std::size_t k = 0;
    for (const auto& r : curves[0].records) {
        ASSERT_TRUE(r.stored.stussi.has_value());
        EXPECT_EQ(*r.stored.stussi, *recomputed[k].stussi);
        EXPECT_EQ(*r.stored.sigma_a3, r.sigma_a * r.sigma_a * r.sigma_a);
        ++k;
    }
    EXPECT_TRUE(check_stored_features(curves).empty());
}

TEST(Generate, NoiselessSameSeedIdenticalFiles) {
    TempDir dir;
    const std::vector<SynthCurveSpec> specs{spec(1), spec(2)};
    write_dataset(dir / "a.csv", generate(specs, 4));
    write_dataset(dir / "b.csv", generate(specs, 4));
    EXPECT_EQ(read_file(dir / "a.csv"), read_file(dir / "b.csv"));
}

TEST(Generate, NoiseDependsOnSeed) {
    SynthCurveSpec s = spec();
    s.noise_std = 0.2;
    const auto a = generate(std::vector{s}, 1), b = generate(std::vector{s}, 1), c = generate(std::vector{s}, 2);
    EXPECT_EQ(a[0].records[0].log_n, b[0].records[0].log_n);
    EXPECT_NE(a[0].records[0].log_n, c[0].records[0].log_n);
}

TEST(SpecValidation, BadRangesNameCurve) {
    SynthCurveSpec s = spec(17);
    s.sigma_hi = s.uts;
    try {
        s.validate();
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("17"), std::string::npos) << e.what();
    }
    s = spec();
    s.sigma_lo = s.fatigue_strength;
    EXPECT_THROW(s.validate(), ConfigError);
    s = spec();
    s.slope = 0;
    EXPECT_THROW(s.validate(), ConfigError);
    s = spec();
    s.n_points = 0;
    EXPECT_THROW(s.validate(), ConfigError);
    s = spec();
    s.noise_std = -1;
    EXPECT_THROW(s.validate(), ConfigError);
    EXPECT_THROW(generate(std::vector{s}, 1), ConfigError);
}

TEST(Fixture, DefaultShape) {
    const auto curves = default_fixture(1);
    EXPECT_EQ(curves.size(), 54u);
    std::set<std::string> tempers;
    for (const SNCurve& c : curves) {
        EXPECT_GE(c.records.size(), 3u);
        EXPECT_LE(c.records.size(), 6u);
        EXPECT_NO_THROW(validate_curve(c));
        const FatigueRecord& r = c.records.front();
        EXPECT_GE(r.uts, 300);
        EXPECT_LE(r.uts, 600);
        EXPECT_GE(r.fatigue_strength, 80);
        EXPECT_LE(r.fatigue_strength, 250);
        EXPECT_LT(r.tys, r.uts);
        tempers.insert(r.temper);
        for (const auto& rec : c.records) EXPECT_NO_THROW(make_trunk_features(rec));
    }
    EXPECT_EQ(tempers.size(), std::size(kFixtureTempers));
}

TEST(Fixture, SlopesInRange) {
    for (const auto& s : default_fixture_specs(3)) {
        EXPECT_GE(s.slope, 2.0);
        EXPECT_LE(s.slope, 5.0);
        EXPECT_NO_THROW(s.validate());
    }
}

TEST(Fixture, ReproducibleAndSeedSensitive) {
    TempDir dir;
    write_dataset(dir / "a.csv", default_fixture(5));
    write_dataset(dir / "b.csv", default_fixture(5));
    write_dataset(dir / "c.csv", default_fixture(6));
    EXPECT_EQ(read_file(dir / "a.csv"), read_file(dir / "b.csv"));
    EXPECT_NE(read_file(dir / "a.csv"), read_file(dir / "c.csv"));
}

TEST(Fixture, NoiseOptionScalesResiduals) {
    FixtureOptions quiet;
    quiet.noise_std = 0.0;
    const auto specs = default_fixture_specs(2, quiet);
    const auto curves = default_fixture(2, quiet);
    for (std::size_t i = 0; i < curves.size(); ++i)
        for (const auto& r : curves[i].records)
            EXPECT_NEAR(r.log_n, basquin_log_life(specs[i].intercept, specs[i].slope, r.sigma_a), 1e-12);
}
