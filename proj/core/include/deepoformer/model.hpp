#pragma once

#include "deepoformer/blocks.hpp"
#include "deepoformer/dataset.hpp"
#include "deepoformer/features.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace deepoformer {

enum class Variant {
    full,                // Transformer branch, ML2RE loss
    mse_loss,            // same network trained with MSE
    no_domain_features,  // trunk sees [sigma_a, sigma_a^3] only
    mlp_branch,          // plain DeepONet: MLP branch over [one-hot temper | continuous]
    direct_regressor,    // Transformer encoder over all ten inputs, linear head, no trunk
};

std::string_view to_string(Variant v) noexcept;
// Throws ConfigError for unknown names.
Variant parse_variant(std::string_view name);
std::span<const Variant> all_variants() noexcept;

// How the continuous branch inputs are normalized before joining the
// contextual embeddings. `layer` normalizes each record's feature vector
// (row statistics), which discards its mean and scale; `affine` keeps the
// standardized values and learns a per-feature gain and bias.
enum class ContinuousNorm { affine, layer };

std::string_view to_string(ContinuousNorm n) noexcept;
ContinuousNorm parse_continuous_norm(std::string_view name);

struct ModelDims {
    std::size_t p = 16;  // width of the branch and trunk embeddings
    std::size_t n_blocks = 2;
    nn::AttentionConfig attention{};
    std::size_t branch_hidden = 64;
    std::size_t branch_layers = 2;
    std::size_t trunk_hidden = 64;
    std::size_t trunk_layers = 2;
    bool trunk_output_activation = true;
    ContinuousNorm continuous_norm = ContinuousNorm::affine;
    double leaky_slope = nn::kLeakySlope;

    void validate() const;
};

// Standardized inputs for a batch of records.
struct ModelInput {
    ad::Tensor continuous;      // B x 4: UTS, TYS, FatigueStrength, R
    std::vector<int> categories;  // B x n_categorical, row-major
    std::size_t n_categorical = 1;
    ad::Tensor trunk;           // B x 5: sigma_a, sigma_a^3, Stussi, Weibull, PM

    std::size_t size() const noexcept { return continuous.rows(); }
    ModelInput select(std::span<const std::size_t> rows) const;
};

// Vocabulary plus training-set statistics: everything needed to turn raw
// records into model inputs. Temper ids pass through unscaled.
class InputEncoder {
public:
    InputEncoder() = default;
    InputEncoder(TemperVocabulary vocab, Standardizer branch, Standardizer trunk, LogBase base);

    // Throws ArgumentError on an empty training set.
    static InputEncoder fit(std::span<const FatigueRecord> train, LogBase base = LogBase::ten);

    ModelInput encode(std::span<const FatigueRecord> records) const;
    ModelInput encode(std::span<const BranchFeatures> branch, std::span<const TrunkFeatures> trunk) const;

    const TemperVocabulary& vocabulary() const noexcept { return vocab_; }
    const Standardizer& branch_scaler() const noexcept { return branch_; }
    const Standardizer& trunk_scaler() const noexcept { return trunk_; }
    LogBase log_base() const noexcept { return base_; }
    std::vector<std::size_t> category_sizes() const { return {vocab_.size()}; }

private:
    TemperVocabulary vocab_;
    Standardizer branch_;
    Standardizer trunk_;
    LogBase base_ = LogBase::ten;
};

// G(u)(y) = sum_i b_i t_i + b0 with b from the branch encoder and t from the
// trunk network. The direct_regressor variant maps the encoder output
// through a linear head instead.
class DeepOFormerModel {
public:
    // Throws ConfigError on invalid dims or empty category sizes.
    static DeepOFormerModel build(Variant variant, const ModelDims& dims, std::vector<std::size_t> category_sizes,
                                  std::uint64_t seed);

    DeepOFormerModel(DeepOFormerModel&&) noexcept;
    DeepOFormerModel& operator=(DeepOFormerModel&&) noexcept;
    ~DeepOFormerModel();

    // B x 1 predictions of log10(N).
    ad::Var forward(nn::ForwardContext& ctx, const ModelInput& input) const;
    // B x p. Throws ConfigError for direct_regressor (no operator head).
    ad::Var branch_embedding(nn::ForwardContext& ctx, const ModelInput& input) const;
    ad::Var trunk_embedding(nn::ForwardContext& ctx, const ModelInput& input) const;

    // Eval-mode convenience wrappers.
    std::vector<double> predict(const ModelInput& input) const;
    ad::Tensor branch_values(const ModelInput& input) const;
    ad::Tensor trunk_values(const ModelInput& input) const;

    // Test hooks: replace b or t with fixed values (B x p or 1 x p rows).
    void inject_branch(std::optional<ad::Tensor> b);
    void inject_trunk(std::optional<ad::Tensor> t);

    // Marks every attention pass so row sums are asserted (debug tapes).
    void set_debug(bool on) noexcept { debug_ = on; }

    Variant variant() const noexcept { return variant_; }
    const ModelDims& dims() const noexcept { return dims_; }
    const std::vector<std::size_t>& category_sizes() const noexcept { return category_sizes_; }
    std::uint64_t seed() const noexcept { return seed_; }
    bool has_trunk() const noexcept;
    std::size_t trunk_input_width() const noexcept;
    const std::vector<nn::TransformerBlock>& blocks() const noexcept;

    ad::ParameterSet& parameters() noexcept { return *params_; }
    const ad::ParameterSet& parameters() const noexcept { return *params_; }

private:
    struct Layers;
    DeepOFormerModel();

    ad::Var encoder_output(nn::ForwardContext& ctx, const ModelInput& input) const;

    Variant variant_ = Variant::full;
    ModelDims dims_;
    std::vector<std::size_t> category_sizes_;
    std::uint64_t seed_ = 0;
    bool debug_ = false;
    std::unique_ptr<ad::ParameterSet> params_;
    std::unique_ptr<Layers> layers_;
    std::optional<ad::Tensor> injected_branch_;
    std::optional<ad::Tensor> injected_trunk_;
};

// (sigma_a, predicted log10 N) along a stress grid for one curve's constants.
struct CurvePoint {
    double sigma_a = 0.0;
    double log_n = 0.0;
};

struct CurvePrediction {
    std::vector<CurvePoint> points;
    std::vector<double> skipped;  // grid values outside the feature domain
};

CurvePrediction predict_curve(const DeepOFormerModel& model, const InputEncoder& encoder,
                              const FatigueRecord& curve_constants, std::span<const double> sigma_grid);

// A trained model with the encoder it was trained against.
struct ModelBundle {
    DeepOFormerModel model;
    InputEncoder encoder;
};

// JSON checkpoint with variant, dims, vocabulary, scaler statistics and
// parameters ("format": "deepoformer.model", "version": 1).
void save_checkpoint(const std::filesystem::path& path, const DeepOFormerModel& model, const InputEncoder& encoder);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace deepoformer
