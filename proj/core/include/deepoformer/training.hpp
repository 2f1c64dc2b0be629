#pragma once

#include "deepoformer/adam.hpp"
#include "deepoformer/dataset.hpp"
#include "deepoformer/evaluation.hpp"
#include "deepoformer/model.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace deepoformer {

inline constexpr double kMl2reEpsilon = 1e-30;

enum class LossKind { ml2re, mse };

std::string_view to_string(LossKind kind) noexcept;

struct LossConfig {
    LossKind kind = LossKind::ml2re;
    double epsilon = kMl2reEpsilon;  // ml2re only

    void validate() const;
};

// The loss each variant is trained with: MSE for mse_loss, ML2RE otherwise.
LossConfig loss_for(Variant variant);

// (1/n) sum (y - y_hat)^2 / (y^2 + eps). Both operands are n x 1 (or 1 x n).
ad::Var ml2re_loss(ad::Var targets, ad::Var predictions, double epsilon = kMl2reEpsilon);
ad::Var mse_loss(ad::Var targets, ad::Var predictions);
ad::Var compute_loss(const LossConfig& config, ad::Var targets, ad::Var predictions);

// Plain-value versions. Throw ArgumentError on length mismatch or n = 0.
double ml2re_loss(std::span<const double> targets, std::span<const double> predictions,
                  double epsilon = kMl2reEpsilon);
double mse_loss(std::span<const double> targets, std::span<const double> predictions);

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 64;
    std::size_t epochs = 3000;
    std::uint64_t seed = 0;
    bool shuffle = true;
    std::size_t log_every = 1;
    // Stop after this many epochs without a new best training loss. Off by default.
    std::optional<std::size_t> early_stopping_patience;

    // Throws ConfigError; lr may be 0 (degenerate optimizer) but not negative.
    void validate() const;
};

struct TrainResult {
    std::vector<double> epoch_loss;  // per-record mean loss of each epoch
    std::size_t steps = 0;
    bool stopped_early = false;
};

// Called every `log_every` epochs and after the last one (1-based epoch).
using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

// Mini-batch Adam with a per-epoch seeded shuffle; the last partial batch is
// kept. Throws NumericError naming the epoch and batch on a non-finite value.
TrainResult train(DeepOFormerModel& model, const ModelInput& inputs, std::span<const double> targets,
                  const LossConfig& loss, const TrainConfig& config, const EpochCallback& on_epoch = {});
TrainResult train(DeepOFormerModel& model, const InputEncoder& encoder, std::span<const FatigueRecord> records,
                  const LossConfig& loss, const TrainConfig& config, const EpochCallback& on_epoch = {});

struct RepetitionConfig {
    std::size_t n_repetitions = 10;
    std::uint64_t base_seed = 0;
    std::size_t workers = 1;

    std::uint64_t seed_for(std::size_t index) const noexcept { return base_seed + index; }
    void validate() const;
};

struct ExperimentConfig {
    Variant variant = Variant::full;
    ModelDims dims{};
    TrainConfig train{};  // seed is overridden per repetition
    LogBase log_base = LogBase::ten;
    std::size_t dense_grid_points = kDenseGridPoints;
};

struct Repetition {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    std::optional<DeepOFormerModel> model;  // empty when training aborted
    TrainResult trace;
    std::string error;
};

struct RepetitionRun {
    InputEncoder encoder;
    std::vector<Repetition> repetitions;  // ordered by index
    RunReport report;
};

// Trains one independently seeded model per repetition on the training side
// of `split` and evaluates each on the test curves. Repetitions run on up to
// `workers` threads; results do not depend on the worker count. A repetition
// that throws is recorded as failed and left out of the aggregates.
RepetitionRun run_repetitions(std::span<const SNCurve> curves, const CurveSplit& split, const ExperimentConfig& config,
                              const RepetitionConfig& reps,
                              const std::function<void(std::size_t index, std::size_t epoch, double loss)>& on_epoch = {});

}  // namespace deepoformer
