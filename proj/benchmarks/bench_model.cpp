#include "deepoformer/model.hpp"
#include "deepoformer/synthgen.hpp"
#include "deepoformer/training.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace deepoformer;

namespace {

struct Fixture {
    std::vector<FatigueRecord> records;
    InputEncoder encoder;

    static const Fixture& get() {
        static const Fixture f = [] {
            Fixture x;
            x.records = flatten(default_fixture(1));
            x.encoder = InputEncoder::fit(x.records);
            return x;
        }();
        return f;
    }

    ModelInput batch(std::size_t n) const {
        std::vector<FatigueRecord> rows;
        for (std::size_t i = 0; i < n; ++i) rows.push_back(records[i % records.size()]);
        return encoder.encode(rows);
    }
};

void BM_Predict(benchmark::State& state) {
    const Fixture& f = Fixture::get();
    const auto model = DeepOFormerModel::build(Variant::full, ModelDims{}, f.encoder.category_sizes(), 1);
    const ModelInput input = f.batch(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(model.predict(input));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Predict)->Arg(1)->Arg(64)->Arg(256);

void BM_ForwardBackward(benchmark::State& state) {
    const Fixture& f = Fixture::get();
    const auto variant = static_cast<Variant>(state.range(1));
    auto model = DeepOFormerModel::build(variant, ModelDims{}, f.encoder.category_sizes(), 1);
    const auto n = static_cast<std::size_t>(state.range(0));
    const ModelInput input = f.batch(n);
    ad::Tensor targets(n, 1);
    for (std::size_t i = 0; i < n; ++i) targets[i] = f.records[i % f.records.size()].log_n;
    const LossConfig loss = loss_for(variant);
    std::mt19937_64 rng(7);
    for (auto _ : state) {
        model.parameters().zero_grad();
        ad::Tape tape;
        nn::ForwardContext ctx{tape, nn::Mode::train, &rng};
        const ad::Var out = compute_loss(loss, tape.constant(targets), model.forward(ctx, input));
        tape.backward(out);
    }
    state.SetLabel(std::string(to_string(variant)));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)
    ->Args({64, static_cast<int>(Variant::full)})
    ->Args({64, static_cast<int>(Variant::mlp_branch)})
    ->Args({64, static_cast<int>(Variant::direct_regressor)});

void BM_TrainEpoch(benchmark::State& state) {
    const Fixture& f = Fixture::get();
    auto model = DeepOFormerModel::build(Variant::full, ModelDims{}, f.encoder.category_sizes(), 1);
    TrainConfig config;
    config.epochs = 1;
    for (auto _ : state) benchmark::DoNotOptimize(train(model, f.encoder, f.records, loss_for(Variant::full), config));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.records.size()));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace
