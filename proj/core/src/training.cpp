#include "deepoformer/training.hpp"

#include "deepoformer/errors.hpp"
#include "deepoformer/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

namespace deepoformer {

using ad::Tensor;
using ad::Var;

namespace {

// Dropout masks draw from a stream separate from the shuffle.
constexpr std::uint64_t kDropoutStream = 0x9E3779B97F4A7C15ULL;

void require_pair(const char* what, std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ArgumentError(std::string(what) + ": length mismatch (" + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()) + ")");
    }
    if (a.empty()) throw ArgumentError(std::string(what) + " of empty vectors");
}

void require_pair(const char* what, Var a, Var b) {
    if (!a.value().same_shape(b.value())) {
        throw ShapeError(std::string(what) + ": targets " + a.value().shape_string() + " vs predictions " +
                         b.value().shape_string());
    }
}

}  // namespace

std::string_view to_string(LossKind kind) noexcept { return kind == LossKind::ml2re ? "ml2re" : "mse"; }

void LossConfig::validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("loss epsilon must be > 0");
}

LossConfig loss_for(Variant variant) {
    return variant == Variant::mse_loss ? LossConfig{LossKind::mse, kMl2reEpsilon} : LossConfig{};
}

Var ml2re_loss(Var targets, Var predictions, double epsilon) {
    require_pair("ml2re_loss", targets, predictions);
    Var residual = ad::square(ad::sub(targets, predictions));
    return ad::mean(ad::div(residual, ad::add_scalar(ad::square(targets), epsilon)));
}

Var mse_loss(Var targets, Var predictions) {
    require_pair("mse_loss", targets, predictions);
    return ad::mean(ad::square(ad::sub(targets, predictions)));
}

Var compute_loss(const LossConfig& config, Var targets, Var predictions) {
    return config.kind == LossKind::ml2re ? ml2re_loss(targets, predictions, config.epsilon)
                                          : mse_loss(targets, predictions);
}

double ml2re_loss(std::span<const double> targets, std::span<const double> predictions, double epsilon) {
    require_pair("ml2re_loss", targets, predictions);
    double total = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double r = targets[i] - predictions[i];
        total += r * r / (targets[i] * targets[i] + epsilon);
    }
    return total / static_cast<double>(targets.size());
}

double mse_loss(std::span<const double> targets, std::span<const double> predictions) {
    require_pair("mse_loss", targets, predictions);
    double total = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) total += (targets[i] - predictions[i]) * (targets[i] - predictions[i]);
    return total / static_cast<double>(targets.size());
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be >= 0");
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (log_every == 0) throw ConfigError("log_every must be >= 1");
    if (early_stopping_patience && *early_stopping_patience == 0) {
        throw ConfigError("early stopping patience must be >= 1");
    }
}

TrainResult train(DeepOFormerModel& model, const ModelInput& inputs, std::span<const double> targets,
                  const LossConfig& loss, const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    loss.validate();
    const std::size_t n = inputs.size();
    if (n == 0) throw ArgumentError("cannot train on an empty training set");
    if (targets.size() != n) throw ArgumentError("one target per training record required");

    ad::ParameterSet& params = model.parameters();
    ad::AdamState adam(params, ad::AdamConfig{config.learning_rate});
    std::mt19937_64 shuffle_rng(config.seed);
    std::mt19937_64 dropout_rng(config.seed ^ kDropoutStream);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    result.epoch_loss.reserve(config.epochs);
    double best = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        if (config.shuffle) std::shuffle(order.begin(), order.end(), shuffle_rng);
        double total = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
            const std::size_t end = std::min(n, start + config.batch_size);
            const std::span<const std::size_t> rows(order.data() + start, end - start);
            try {
                const ModelInput batch = inputs.select(rows);
                Tensor y(rows.size(), 1);
                for (std::size_t i = 0; i < rows.size(); ++i) y[i] = targets[rows[i]];

                ad::Tape tape;
                nn::ForwardContext ctx{tape, nn::Mode::train, &dropout_rng};
                params.zero_grad();
                Var value = compute_loss(loss, tape.constant(std::move(y)), model.forward(ctx, batch));
                const double l = value.value().item();
                if (!std::isfinite(l)) throw NumericError("non-finite loss");
                tape.backward(value);
                ad::adam_step(params, adam);
                total += l * static_cast<double>(rows.size());
                ++result.steps;
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index + 1) +
                                   ": " + e.what());
            }
        }
        const double epoch_loss = total / static_cast<double>(n);
        result.epoch_loss.push_back(epoch_loss);

        bool stop = false;
        if (config.early_stopping_patience) {
            if (epoch_loss < best) {
                best = epoch_loss;
                since_best = 0;
            } else if (++since_best >= *config.early_stopping_patience) {
                stop = true;
            }
        }
        const bool last = stop || epoch == config.epochs;
        if (on_epoch && (epoch % config.log_every == 0 || last)) on_epoch(epoch, epoch_loss);
        if (stop) {
            result.stopped_early = true;
            break;
        }
    }
    return result;
}

TrainResult train(DeepOFormerModel& model, const InputEncoder& encoder, std::span<const FatigueRecord> records,
                  const LossConfig& loss, const TrainConfig& config, const EpochCallback& on_epoch) {
    std::vector<double> targets;
    targets.reserve(records.size());
    for (const FatigueRecord& r : records) targets.push_back(r.log_n);
    return train(model, encoder.encode(records), targets, loss, config, on_epoch);
}

void RepetitionConfig::validate() const {
    if (n_repetitions == 0) throw ConfigError("number of repetitions must be >= 1");
    if (workers == 0) throw ConfigError("workers must be >= 1");
}

RepetitionRun run_repetitions(std::span<const SNCurve> curves, const CurveSplit& split, const ExperimentConfig& config,
                              const RepetitionConfig& reps,
                              const std::function<void(std::size_t, std::size_t, double)>& on_epoch) {
    reps.validate();
    config.dims.validate();
    config.train.validate();

    const std::vector<FatigueRecord> train_set = train_records(curves, split);
    const std::vector<SNCurve> test = test_curves(curves, split);
    if (train_set.empty()) throw ArgumentError("split leaves no training records");
    if (test.empty()) throw ArgumentError("split leaves no test curves");

    RepetitionRun run;
    run.encoder = InputEncoder::fit(train_set, config.log_base);
    const ModelInput inputs = run.encoder.encode(train_set);
    std::vector<double> targets;
    targets.reserve(train_set.size());
    for (const FatigueRecord& r : train_set) targets.push_back(r.log_n);
    std::vector<std::vector<GridPoint>> grids;
    for (const SNCurve& c : test) grids.push_back(curve_grid(c, config.dense_grid_points));

    const LossConfig loss = loss_for(config.variant);
    run.repetitions.resize(reps.n_repetitions);
    std::vector<SeedOutcome> outcomes(reps.n_repetitions);
    std::mutex callback_mutex;
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t i = next++; i < reps.n_repetitions; i = next++) {
            Repetition& rep = run.repetitions[i];
            SeedOutcome& outcome = outcomes[i];
            rep.index = outcome.index = i;
            rep.seed = outcome.seed = reps.seed_for(i);
            try {
                DeepOFormerModel model =
                    DeepOFormerModel::build(config.variant, config.dims, run.encoder.category_sizes(), rep.seed);
                TrainConfig tc = config.train;
                tc.seed = rep.seed;
                EpochCallback cb;
                if (on_epoch) {
                    cb = [&, i](std::size_t epoch, double l) {
                        std::lock_guard lock(callback_mutex);
                        on_epoch(i, epoch, l);
                    };
                }
                rep.trace = train(model, inputs, targets, loss, tc, cb);
                outcome.evaluation = evaluate_seed(model, run.encoder, test, grids);
                rep.model.emplace(std::move(model));
            } catch (const std::exception& e) {
                rep.error = outcome.error = e.what();
                rep.model.reset();
                outcome.evaluation.reset();
            }
        }
    };

    const std::size_t n_threads = std::min(reps.workers, reps.n_repetitions);
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }

    run.report = aggregate(std::string(to_string(config.variant)), test, grids, outcomes);
    return run;
}

}  // namespace deepoformer
