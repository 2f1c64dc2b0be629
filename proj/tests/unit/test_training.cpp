#include "deepoformer/errors.hpp"
#include "deepoformer/ops.hpp"
#include "deepoformer/synthgen.hpp"
#include "deepoformer/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace deepoformer;
using ad::Tensor;

namespace {

struct Data {
    std::vector<SNCurve> curves;
    std::vector<FatigueRecord> records;
    InputEncoder encoder;
    ModelInput input;
    std::vector<double> targets;
};

Data data(std::size_t n_curves = 5) {
    Data d;
    FixtureOptions opts;
    opts.n_curves = n_curves;
    d.curves = default_fixture(4, opts);
    d.records = flatten(d.curves);
    d.encoder = InputEncoder::fit(d.records);
    d.input = d.encoder.encode(d.records);
    for (const auto& r : d.records) d.targets.push_back(r.log_n);
    return d;
}

ModelDims small_dims() {
    ModelDims dims;
    dims.p = 8;
    dims.n_blocks = 1;
    dims.attention.n_heads = 2;
    dims.attention.head_dim = 8;
    dims.attention.model_dim = 8;
    dims.branch_hidden = dims.trunk_hidden = 16;
    return dims;
}

TrainConfig short_run(std::size_t epochs, std::uint64_t seed = 1) {
    TrainConfig c;
    c.epochs = epochs;
    c.batch_size = 16;
    c.seed = seed;
    return c;
}

}  // namespace

TEST(Ml2re, HandValues) {
    EXPECT_EQ(ml2re_loss(std::vector<double>{3, 4}, std::vector<double>{3, 4}), 0.0);
    EXPECT_DOUBLE_EQ(ml2re_loss(std::vector<double>{2}, std::vector<double>{1}), 1.0 / (4.0 + kMl2reEpsilon));
    EXPECT_DOUBLE_EQ(ml2re_loss(std::vector<double>{2, 4}, std::vector<double>{1, 5}), 0.15625);
}

TEST(Mse, HandValues) {
    EXPECT_EQ(mse_loss(std::vector<double>{3, 4}, std::vector<double>{3, 4}), 0.0);
    EXPECT_EQ(mse_loss(std::vector<double>{2}, std::vector<double>{1}), 1.0);
}

TEST(Losses, AgreeWhereTargetsHaveUnitSquare) {
    const std::vector<double> y{1, -1, 1}, p{0.2, -3, 2.5};
    EXPECT_DOUBLE_EQ(ml2re_loss(y, p), mse_loss(y, p));
}

TEST(Losses, LengthChecks) {
    EXPECT_THROW(ml2re_loss(std::vector<double>{1, 2}, std::vector<double>{1}), ArgumentError);
    EXPECT_THROW(mse_loss(std::vector<double>{}, std::vector<double>{}), ArgumentError);
    ad::Tape t;
    EXPECT_THROW(ml2re_loss(t.constant(Tensor(3, 1)), t.constant(Tensor(2, 1))), ShapeError);
}

TEST(Losses, TapeMatchesPlainValue) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(4, 9);
    std::vector<double> y(7), p(7);
    for (std::size_t i = 0; i < 7; ++i) y[i] = u(rng), p[i] = u(rng);
    ad::Tape t;
    const auto yt = t.constant(Tensor(7, 1, y)), pt = t.constant(Tensor(7, 1, p));
    EXPECT_DOUBLE_EQ(ml2re_loss(yt, pt).value().item(), ml2re_loss(y, p));
    EXPECT_DOUBLE_EQ(mse_loss(yt, pt).value().item(), mse_loss(y, p));
}

// d loss / d prediction against central differences of the plain loss.
TEST(Losses, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(4, 9);
    std::vector<double> y(6), p(6);
    for (std::size_t i = 0; i < 6; ++i) y[i] = u(rng), p[i] = u(rng);
    for (LossKind kind : {LossKind::ml2re, LossKind::mse}) {
        const LossConfig cfg{kind};
        ad::Tape t;
        const auto pv = t.variable(Tensor(6, 1, p));
        t.backward(compute_loss(cfg, t.constant(Tensor(6, 1, y)), pv));
        const Tensor g = t.grad(pv);
        for (std::size_t i = 0; i < 6; ++i) {
            const double h = 1e-5;
            auto plain = [&](double delta) {
                std::vector<double> q = p;
                q[i] += delta;
                return kind == LossKind::ml2re ? ml2re_loss(y, q) : mse_loss(y, q);
            };
            const double numeric = (plain(h) - plain(-h)) / (2 * h);
            EXPECT_LE(std::abs(g[i] - numeric) / std::max(std::abs(numeric), 1e-8), 1e-6) << to_string(kind) << i;
        }
    }
}

TEST(Losses, VariantLossMapping) {
    for (Variant v : all_variants())
        EXPECT_EQ(loss_for(v).kind, v == Variant::mse_loss ? LossKind::mse : LossKind::ml2re);
    LossConfig bad;
    bad.epsilon = -1;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(TrainConfig, Validation) {
    TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.learning_rate = -1e-3;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.epochs = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.learning_rate = 0;
    EXPECT_NO_THROW(c.validate());
}

TEST(Train, SameSeedSameTrace) {
    const Data d = data();
    auto run = [&] {
        auto m = DeepOFormerModel::build(Variant::full, small_dims(), d.encoder.category_sizes(), 3);
        return train(m, d.input, d.targets, LossConfig{}, short_run(15)).epoch_loss;
    };
    const auto a = run(), b = run();
    ASSERT_EQ(a.size(), 15u);
    EXPECT_EQ(a, b);
}

TEST(Train, ZeroLearningRateLeavesParameters) {
    const Data d = data();
    ModelDims dims = small_dims();
    dims.attention.attention_dropout = dims.attention.ffn_dropout = 0.0;
    auto m = DeepOFormerModel::build(Variant::full, dims, d.encoder.category_sizes(), 3);
    std::vector<Tensor> before;
    for (const auto& p : m.parameters()) before.push_back(p->value);
    TrainConfig c = short_run(5);
    c.learning_rate = 0;
    const auto trace = train(m, d.input, d.targets, LossConfig{}, c).epoch_loss;
    std::size_t i = 0;
    for (const auto& p : m.parameters()) EXPECT_EQ(p->value, before[i++]) << p->name;
    for (double l : trace) EXPECT_NEAR(l, trace.front(), 1e-14);
}

TEST(Train, LossFallsOnFixture) {
    const Data d = data(8);
    auto m = DeepOFormerModel::build(Variant::full, ModelDims{}, d.encoder.category_sizes(), 1);
    const auto trace = train(m, d.input, d.targets, LossConfig{}, short_run(40)).epoch_loss;
    for (double l : trace) EXPECT_TRUE(std::isfinite(l));
    EXPECT_LT(trace.back(), trace.front());
}

TEST(Train, StepsCountPartialBatches) {
    const Data d = data();
    auto m = DeepOFormerModel::build(Variant::mlp_branch, small_dims(), d.encoder.category_sizes(), 1);
    TrainConfig c = short_run(3);
    c.batch_size = 7;
    const auto result = train(m, d.input, d.targets, LossConfig{}, c);
    const std::size_t per_epoch = (d.records.size() + 6) / 7;
    EXPECT_EQ(result.steps, 3 * per_epoch);
}

TEST(Train, CallbackCadence) {
    const Data d = data();
    auto m = DeepOFormerModel::build(Variant::mlp_branch, small_dims(), d.encoder.category_sizes(), 1);
    TrainConfig c = short_run(10);
    c.log_every = 4;
    std::vector<std::size_t> seen;
    const auto result = train(m, d.input, d.targets, LossConfig{}, c, [&](std::size_t e, double l) {
        seen.push_back(e);
        EXPECT_TRUE(std::isfinite(l));
    });
    EXPECT_EQ(seen, (std::vector<std::size_t>{4, 8, 10}));
    EXPECT_EQ(result.epoch_loss.size(), 10u);
}

TEST(Train, EarlyStoppingStopsOnPlateau) {
    const Data d = data();
    auto m = DeepOFormerModel::build(Variant::mlp_branch, small_dims(), d.encoder.category_sizes(), 1);
    TrainConfig c = short_run(200);
    c.learning_rate = 0;
    c.shuffle = false;
    c.early_stopping_patience = 3;
    const auto result = train(m, d.input, d.targets, LossConfig{}, c);
    EXPECT_TRUE(result.stopped_early);
    EXPECT_LT(result.epoch_loss.size(), 10u);
}

TEST(Train, NonFiniteTargetNamesEpochAndBatch) {
    Data d = data();
    d.targets[0] = std::numeric_limits<double>::quiet_NaN();
    auto m = DeepOFormerModel::build(Variant::full, small_dims(), d.encoder.category_sizes(), 1);
    TrainConfig c = short_run(2);
    c.shuffle = false;
    try {
        train(m, d.input, d.targets, LossConfig{}, c);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
        EXPECT_NE(msg.find("batch 1"), std::string::npos) << msg;
    }
}

TEST(Train, TargetCountMismatch) {
    const Data d = data();
    auto m = DeepOFormerModel::build(Variant::full, small_dims(), d.encoder.category_sizes(), 1);
    std::vector<double> short_targets(d.targets.begin(), d.targets.end() - 1);
    EXPECT_THROW(train(m, d.input, short_targets, LossConfig{}, short_run(1)), ArgumentError);
}

class Repetitions : public ::testing::Test {
protected:
    void SetUp() override {
        FixtureOptions opts;
        opts.n_curves = 8;
        curves = default_fixture(9, opts);
        split = split_curves(curves, 2, 5);
        config.dims = small_dims();
        config.train = short_run(6);
        config.dense_grid_points = 5;
    }
    std::vector<SNCurve> curves;
    CurveSplit split;
    ExperimentConfig config;
};

TEST_F(Repetitions, SingleRepetitionHasZeroSpread) {
    RepetitionConfig reps{1, 100, 1};
    const auto run = run_repetitions(curves, split, config, reps);
    ASSERT_TRUE(run.report.aggregate.has_value());
    EXPECT_EQ(run.report.aggregate->r2.stddev, 0.0);
    EXPECT_EQ(run.report.aggregate->mae.stddev, 0.0);
    EXPECT_EQ(run.report.aggregate->mre.stddev, 0.0);
    EXPECT_EQ(run.repetitions[0].seed, 100u);
}

TEST_F(Repetitions, WorkerCountDoesNotChangeResults) {
    const auto a = run_repetitions(curves, split, config, RepetitionConfig{3, 7, 1});
    const auto b = run_repetitions(curves, split, config, RepetitionConfig{3, 7, 3});
    ASSERT_EQ(a.report.seeds.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(a.report.seeds[i].seed, 7 + i);
        EXPECT_EQ(a.report.seeds[i].metrics.r2, b.report.seeds[i].metrics.r2);
        EXPECT_EQ(a.repetitions[i].trace.epoch_loss, b.repetitions[i].trace.epoch_loss);
    }
    EXPECT_EQ(a.report.aggregate->mae.mean, b.report.aggregate->mae.mean);
}

TEST_F(Repetitions, FailedRepetitionRecordedAndExcluded) {
    const auto run = run_repetitions(curves, split, config, RepetitionConfig{3, 1, 1},
                                     [](std::size_t index, std::size_t, double) {
                                         if (index == 1) throw NumericError("injected failure");
                                     });
    EXPECT_EQ(run.report.completed, 2u);
    EXPECT_FALSE(run.report.all_completed());
    EXPECT_FALSE(run.repetitions[1].model.has_value());
    EXPECT_NE(run.repetitions[1].error.find("injected"), std::string::npos);
    EXPECT_FALSE(run.report.seeds[1].completed);
    const double mean = (run.report.seeds[0].metrics.r2 + run.report.seeds[2].metrics.r2) / 2;
    EXPECT_NEAR(run.report.aggregate->r2.mean, mean, 1e-15);
}

TEST_F(Repetitions, InvalidConfigRejected) {
    EXPECT_THROW(run_repetitions(curves, split, config, RepetitionConfig{0, 1, 1}), ConfigError);
    EXPECT_THROW(run_repetitions(curves, split, config, RepetitionConfig{1, 1, 0}), ConfigError);
}
