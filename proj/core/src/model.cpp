#include "deepoformer/model.hpp"

#include "deepoformer/errors.hpp"
#include "deepoformer/ops.hpp"
#include "json_detail.hpp"

#include <array>
#include <random>

namespace deepoformer {

using ad::Tensor;
using ad::Var;

namespace {

constexpr std::array<Variant, 5> kVariants = {Variant::full, Variant::mse_loss, Variant::no_domain_features,
                                              Variant::mlp_branch, Variant::direct_regressor};
constexpr std::size_t kContinuousWidth = 4;
constexpr std::size_t kTrunkWidth = 5;
constexpr std::size_t kBasicTrunkWidth = 2;

std::vector<std::size_t> mlp_widths(std::size_t in, std::size_t hidden, std::size_t layers, std::size_t out) {
    std::vector<std::size_t> widths{in};
    for (std::size_t i = 0; i < layers; ++i) widths.push_back(hidden);
    widths.push_back(out);
    return widths;
}

// Repeats a 1 x p injected row for every record in the batch.
Tensor expand_rows(const Tensor& t, std::size_t batch, const char* what) {
    if (t.rows() == batch) return t;
    if (t.rows() != 1) {
        throw ShapeError(std::string("injected ") + what + " has " + std::to_string(t.rows()) +
                         " rows for a batch of " + std::to_string(batch));
    }
    Tensor out(batch, t.cols());
    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) out(i, j) = t[j];
    return out;
}

}  // namespace

std::string_view to_string(Variant v) noexcept {
    switch (v) {
        case Variant::full: return "full";
        case Variant::mse_loss: return "mse_loss";
        case Variant::no_domain_features: return "no_domain_features";
        case Variant::mlp_branch: return "mlp_branch";
        case Variant::direct_regressor: return "direct_regressor";
    }
    return "unknown";
}

Variant parse_variant(std::string_view name) {
    for (Variant v : kVariants)
        if (to_string(v) == name) return v;
    throw ConfigError("unknown variant '" + std::string(name) +
                      "' (expected full, mse_loss, no_domain_features, mlp_branch or direct_regressor)");
}

std::span<const Variant> all_variants() noexcept { return kVariants; }

std::string_view to_string(ContinuousNorm n) noexcept { return n == ContinuousNorm::affine ? "affine" : "layer"; }

ContinuousNorm parse_continuous_norm(std::string_view name) {
    if (name == "affine") return ContinuousNorm::affine;
    if (name == "layer") return ContinuousNorm::layer;
    throw ConfigError("unknown continuous norm '" + std::string(name) + "' (expected affine or layer)");
}

void ModelDims::validate() const {
    if (p == 0) throw ConfigError("embedding width p must be >= 1");
    if (branch_hidden == 0 || branch_layers == 0) throw ConfigError("branch MLP needs >= 1 hidden layer of width >= 1");
    if (trunk_hidden == 0 || trunk_layers == 0) throw ConfigError("trunk MLP needs >= 1 hidden layer of width >= 1");
    attention.validate();
}

ModelInput ModelInput::select(std::span<const std::size_t> rows) const {
    ModelInput out;
    out.n_categorical = n_categorical;
    out.continuous = Tensor(rows.size(), continuous.cols());
    out.trunk = Tensor(rows.size(), trunk.cols());
    out.categories.reserve(rows.size() * n_categorical);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t r = rows[i];
        if (r >= size()) throw ArgumentError("ModelInput::select: row " + std::to_string(r) + " out of range");
        std::copy_n(continuous.row_span(r).begin(), continuous.cols(), out.continuous.row_span(i).begin());
        std::copy_n(trunk.row_span(r).begin(), trunk.cols(), out.trunk.row_span(i).begin());
        for (std::size_t c = 0; c < n_categorical; ++c) out.categories.push_back(categories[r * n_categorical + c]);
    }
    return out;
}

InputEncoder::InputEncoder(TemperVocabulary vocab, Standardizer branch, Standardizer trunk, LogBase base)
    : vocab_(std::move(vocab)), branch_(std::move(branch)), trunk_(std::move(trunk)), base_(base) {
    if (branch_.width() != kContinuousWidth || trunk_.width() != kTrunkWidth) {
        throw ArgumentError("input encoder expects 4 branch and 5 trunk statistics");
    }
}

InputEncoder InputEncoder::fit(std::span<const FatigueRecord> train, LogBase base) {
    if (train.empty()) throw ArgumentError("cannot fit the input encoder on an empty training set");
    TemperVocabulary vocab;
    std::vector<std::vector<double>> branch_rows, trunk_rows;
    branch_rows.reserve(train.size());
    trunk_rows.reserve(train.size());
    for (const FatigueRecord& r : train) {
        vocab.add(r.temper);
        const auto b = make_branch_features(r, vocab).continuous();
        const auto t = make_trunk_features(r, base).values();
        branch_rows.emplace_back(b.begin(), b.end());
        trunk_rows.emplace_back(t.begin(), t.end());
    }
    return InputEncoder(std::move(vocab), Standardizer::fit(branch_rows), Standardizer::fit(trunk_rows), base);
}

ModelInput InputEncoder::encode(std::span<const BranchFeatures> branch, std::span<const TrunkFeatures> trunk) const {
    if (branch.size() != trunk.size()) throw ArgumentError("branch and trunk feature counts differ");
    ModelInput in;
    in.n_categorical = 1;
    in.continuous = Tensor(branch.size(), kContinuousWidth);
    in.trunk = Tensor(branch.size(), kTrunkWidth);
    in.categories.reserve(branch.size());
    for (std::size_t i = 0; i < branch.size(); ++i) {
        const auto c = branch[i].continuous();
        const auto t = trunk[i].values();
        for (std::size_t j = 0; j < kContinuousWidth; ++j) in.continuous(i, j) = branch_.apply(j, c[j]);
        for (std::size_t j = 0; j < kTrunkWidth; ++j) in.trunk(i, j) = trunk_.apply(j, t[j]);
        in.categories.push_back(branch[i].temper_id);
    }
    return in;
}

ModelInput InputEncoder::encode(std::span<const FatigueRecord> records) const {
    std::vector<BranchFeatures> branch;
    std::vector<TrunkFeatures> trunk;
    branch.reserve(records.size());
    trunk.reserve(records.size());
    for (const FatigueRecord& r : records) {
        branch.push_back(make_branch_features(r, vocab_));
        trunk.push_back(make_trunk_features(r, base_));
    }
    return encode(branch, trunk);
}

struct DeepOFormerModel::Layers {
    std::vector<nn::ColumnEmbedding> embeddings;
    std::vector<nn::TransformerBlock> blocks;
    std::optional<nn::LayerNorm> continuous_norm;
    std::optional<nn::Mlp> branch_head;
    std::optional<nn::Mlp> trunk;
    std::optional<nn::Linear> regression_head;
    ad::Parameter* bias0 = nullptr;
};

DeepOFormerModel::DeepOFormerModel()
    : params_(std::make_unique<ad::ParameterSet>()), layers_(std::make_unique<Layers>()) {}
DeepOFormerModel::DeepOFormerModel(DeepOFormerModel&&) noexcept = default;
DeepOFormerModel& DeepOFormerModel::operator=(DeepOFormerModel&&) noexcept = default;
DeepOFormerModel::~DeepOFormerModel() = default;

DeepOFormerModel DeepOFormerModel::build(Variant variant, const ModelDims& dims,
                                         std::vector<std::size_t> category_sizes, std::uint64_t seed) {
    dims.validate();
    if (category_sizes.empty()) throw ConfigError("model needs at least one categorical column");
    for (std::size_t s : category_sizes)
        if (s == 0) throw ConfigError("categorical vocabulary size must be >= 1");

    DeepOFormerModel m;
    m.variant_ = variant;
    m.dims_ = dims;
    m.category_sizes_ = std::move(category_sizes);
    m.seed_ = seed;

    std::mt19937_64 rng(seed);
    ad::ParameterSet& params = *m.params_;
    Layers& L = *m.layers_;
    const std::size_t n_cat = m.category_sizes_.size();
    const std::size_t d_model = dims.attention.model_dim;

    if (variant == Variant::mlp_branch) {
        std::size_t one_hot = 0;
        for (std::size_t s : m.category_sizes_) one_hot += s;
        L.branch_head.emplace(params, "branch.mlp",
                              mlp_widths(one_hot + kContinuousWidth, dims.branch_hidden, dims.branch_layers, dims.p),
                              rng, false, dims.leaky_slope);
    } else {
        for (std::size_t c = 0; c < n_cat; ++c) {
            L.embeddings.emplace_back(params, "branch.embedding." + std::to_string(c), m.category_sizes_[c], d_model,
                                      rng);
        }
        L.blocks.reserve(dims.n_blocks);
        for (std::size_t b = 0; b < dims.n_blocks; ++b) {
            L.blocks.emplace_back(params, "branch.block" + std::to_string(b), dims.attention, rng, dims.leaky_slope);
            if (L.blocks.back().ffn_hidden_width() != 4 * d_model) {
                throw ConfigError("FFN hidden width must equal 4 x model_dim");
            }
        }
        const std::size_t continuous =
            variant == Variant::direct_regressor ? kContinuousWidth + kTrunkWidth : kContinuousWidth;
        L.continuous_norm.emplace(params, "branch.continuous_norm", continuous);
        L.branch_head.emplace(params, "branch.head",
                              mlp_widths(n_cat * d_model + continuous, dims.branch_hidden, dims.branch_layers, dims.p),
                              rng, false, dims.leaky_slope);
    }

    if (variant == Variant::direct_regressor) {
        L.regression_head.emplace(params, "head", dims.p, 1, rng);
    } else {
        const std::size_t trunk_in = variant == Variant::no_domain_features ? kBasicTrunkWidth : kTrunkWidth;
        L.trunk.emplace(params, "trunk", mlp_widths(trunk_in, dims.trunk_hidden, dims.trunk_layers, dims.p), rng,
                        dims.trunk_output_activation, dims.leaky_slope);
        L.bias0 = &params.add("bias0", Tensor(1, 1, 0.0));
    }
    return m;
}

bool DeepOFormerModel::has_trunk() const noexcept { return layers_->trunk.has_value(); }

std::size_t DeepOFormerModel::trunk_input_width() const noexcept {
    if (!has_trunk()) return 0;
    return layers_->trunk->layers().front().in_features();
}

const std::vector<nn::TransformerBlock>& DeepOFormerModel::blocks() const noexcept { return layers_->blocks; }

void DeepOFormerModel::inject_branch(std::optional<Tensor> b) {
    if (b && b->cols() != dims_.p) throw ShapeError("injected branch embedding must have p columns");
    injected_branch_ = std::move(b);
}

void DeepOFormerModel::inject_trunk(std::optional<Tensor> t) {
    if (t && t->cols() != dims_.p) throw ShapeError("injected trunk embedding must have p columns");
    injected_trunk_ = std::move(t);
}

Var DeepOFormerModel::encoder_output(nn::ForwardContext& ctx, const ModelInput& input) const {
    ad::Tape& tape = ctx.tape;
    const Layers& L = *layers_;
    const std::size_t batch = input.size();
    const std::size_t n_cat = category_sizes_.size();
    if (input.n_categorical != n_cat || input.categories.size() != batch * n_cat) {
        throw ShapeError("model expects " + std::to_string(n_cat) + " categorical columns per record");
    }
    if (input.continuous.cols() != kContinuousWidth || input.trunk.cols() != kTrunkWidth ||
        input.trunk.rows() != batch) {
        throw ShapeError("model input must be B x 4 continuous and B x 5 trunk features");
    }

    if (variant_ == Variant::mlp_branch) {
        std::size_t width = 0;
        for (std::size_t s : category_sizes_) width += s;
        Tensor one_hot(batch, width);
        for (std::size_t i = 0; i < batch; ++i) {
            std::size_t offset = 0;
            for (std::size_t c = 0; c < n_cat; ++c) {
                const int id = input.categories[i * n_cat + c];
                if (id < 0 || static_cast<std::size_t>(id) >= category_sizes_[c]) {
                    throw ArgumentError("category id " + std::to_string(id) + " out of range");
                }
                one_hot(i, offset + static_cast<std::size_t>(id)) = 1.0;
                offset += category_sizes_[c];
            }
        }
        Var x = ad::concat({tape.constant(std::move(one_hot)), tape.constant(input.continuous)}, ad::Axis::cols);
        return L.branch_head->forward(tape, x);
    }

    std::vector<Var> columns;
    columns.reserve(n_cat);
    for (std::size_t c = 0; c < n_cat; ++c) {
        std::vector<int> ids(batch);
        for (std::size_t i = 0; i < batch; ++i) ids[i] = input.categories[i * n_cat + c];
        columns.push_back(L.embeddings[c].forward(tape, ids));
    }
    const std::size_t d_model = dims_.attention.model_dim;
    Var tokens = n_cat == 1 ? columns.front() : ad::reshape(ad::concat(columns, ad::Axis::cols), batch * n_cat, d_model);
    for (const auto& block : L.blocks) tokens = block.forward(ctx, tokens, n_cat);
    Var contextual = n_cat == 1 ? tokens : ad::reshape(tokens, batch, n_cat * d_model);

    Var continuous = tape.constant(input.continuous);
    if (variant_ == Variant::direct_regressor) {
        continuous = ad::concat({continuous, tape.constant(input.trunk)}, ad::Axis::cols);
    }
    Var normed = dims_.continuous_norm == ContinuousNorm::layer
                     ? L.continuous_norm->forward(tape, continuous)
                     : ad::add(ad::mul(continuous, tape.parameter(L.continuous_norm->gain())),
                               tape.parameter(L.continuous_norm->bias()));
    return L.branch_head->forward(tape, ad::concat({contextual, normed}, ad::Axis::cols));
}

Var DeepOFormerModel::branch_embedding(nn::ForwardContext& ctx, const ModelInput& input) const {
    if (variant_ == Variant::direct_regressor) throw ConfigError("direct_regressor has no branch embedding");
    if (injected_branch_) return ctx.tape.constant(expand_rows(*injected_branch_, input.size(), "branch"));
    return encoder_output(ctx, input);
}

Var DeepOFormerModel::trunk_embedding(nn::ForwardContext& ctx, const ModelInput& input) const {
    if (!has_trunk()) throw ConfigError("direct_regressor has no trunk network");
    if (injected_trunk_) return ctx.tape.constant(expand_rows(*injected_trunk_, input.size(), "trunk"));
    Var y = ctx.tape.constant(input.trunk);
    if (variant_ == Variant::no_domain_features) y = ad::slice_cols(y, 0, kBasicTrunkWidth);
    return layers_->trunk->forward(ctx.tape, y);
}

Var DeepOFormerModel::forward(nn::ForwardContext& ctx, const ModelInput& input) const {
    if (debug_) ctx.tape.diagnostics().debug = true;
    if (variant_ == Variant::direct_regressor) {
        return layers_->regression_head->forward(ctx.tape, encoder_output(ctx, input));
    }
    Var b = branch_embedding(ctx, input);
    Var t = trunk_embedding(ctx, input);
    Var dot = ad::sum(ad::mul(b, t), ad::Axis::cols);
    return ad::add(dot, ctx.tape.parameter(*layers_->bias0));
}

std::vector<double> DeepOFormerModel::predict(const ModelInput& input) const {
    ad::Tape tape;
    nn::ForwardContext ctx{tape, nn::Mode::eval, nullptr};
    const Tensor& out = forward(ctx, input).value();
    return {out.data().begin(), out.data().end()};
}

Tensor DeepOFormerModel::branch_values(const ModelInput& input) const {
    ad::Tape tape;
    nn::ForwardContext ctx{tape, nn::Mode::eval, nullptr};
    return branch_embedding(ctx, input).value();
}

Tensor DeepOFormerModel::trunk_values(const ModelInput& input) const {
    ad::Tape tape;
    nn::ForwardContext ctx{tape, nn::Mode::eval, nullptr};
    return trunk_embedding(ctx, input).value();
}

CurvePrediction predict_curve(const DeepOFormerModel& model, const InputEncoder& encoder,
                              const FatigueRecord& curve_constants, std::span<const double> sigma_grid) {
    CurvePrediction result;
    std::vector<BranchFeatures> branch;
    std::vector<TrunkFeatures> trunk;
    std::vector<double> kept;
    const BranchFeatures constants = make_branch_features(curve_constants, encoder.vocabulary());
    for (double sigma : sigma_grid) {
        if (!(sigma < curve_constants.uts) || !(sigma > 0.0)) {
            result.skipped.push_back(sigma);
            continue;
        }
        try {
            trunk.push_back(make_trunk_features(curve_constants.uts, sigma, curve_constants.fatigue_strength,
                                                encoder.log_base()));
        } catch (const DomainError&) {
            result.skipped.push_back(sigma);
            continue;
        }
        branch.push_back(constants);
        kept.push_back(sigma);
    }
    if (kept.empty()) return result;
    const auto predictions = model.predict(encoder.encode(branch, trunk));
    result.points.reserve(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) result.points.push_back({kept[i], predictions[i]});
    return result;
}

namespace {

nlohmann::json scaler_json(const Standardizer& s) { return {{"mean", s.mean()}, {"std", s.stddev()}}; }

Standardizer scaler_from_json(const nlohmann::json& j) {
    return Standardizer(j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>());
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DeepOFormerModel& model, const InputEncoder& encoder) {
    const ModelDims& d = model.dims();
    nlohmann::json doc = {
        {"format", "deepoformer.model"},
        {"version", 1},
        {"variant", std::string(to_string(model.variant()))},
        {"seed", model.seed()},
        {"dims",
         {{"p", d.p},
          {"n_blocks", d.n_blocks},
          {"n_heads", d.attention.n_heads},
          {"head_dim", d.attention.head_dim},
          {"model_dim", d.attention.model_dim},
          {"attention_dropout", d.attention.attention_dropout},
          {"ffn_dropout", d.attention.ffn_dropout},
          {"branch_hidden", d.branch_hidden},
          {"branch_layers", d.branch_layers},
          {"trunk_hidden", d.trunk_hidden},
          {"trunk_layers", d.trunk_layers},
          {"trunk_output_activation", d.trunk_output_activation},
          {"continuous_norm", std::string(to_string(d.continuous_norm))},
          {"leaky_slope", d.leaky_slope}}},
        {"category_sizes", model.category_sizes()},
        {"vocabulary", encoder.vocabulary().tokens()},
        {"log_base", encoder.log_base() == LogBase::ten ? "10" : "e"},
        {"scalers", {{"branch", scaler_json(encoder.branch_scaler())}, {"trunk", scaler_json(encoder.trunk_scaler())}}},
        {"parameters", detail::parameters_json(model.parameters())},
    };
    detail::write_text_file(path, doc.dump() + "\n");
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
    const nlohmann::json doc = detail::read_json_file(path);
    try {
        if (doc.at("format").get<std::string>() != "deepoformer.model") {
            throw ParseError(path.string() + " is not a deepoformer model checkpoint");
        }
        if (doc.at("version").get<int>() != 1) throw ParseError("unsupported checkpoint version");
        const auto& j = doc.at("dims");
        ModelDims d;
        d.p = j.at("p");
        d.n_blocks = j.at("n_blocks");
        d.attention.n_heads = j.at("n_heads");
        d.attention.head_dim = j.at("head_dim");
        d.attention.model_dim = j.at("model_dim");
        d.attention.attention_dropout = j.at("attention_dropout");
        d.attention.ffn_dropout = j.at("ffn_dropout");
        d.branch_hidden = j.at("branch_hidden");
        d.branch_layers = j.at("branch_layers");
        d.trunk_hidden = j.at("trunk_hidden");
        d.trunk_layers = j.at("trunk_layers");
        d.trunk_output_activation = j.at("trunk_output_activation");
        d.continuous_norm = parse_continuous_norm(j.at("continuous_norm").get<std::string>());
        d.leaky_slope = j.at("leaky_slope");

        TemperVocabulary vocab;
        const auto tokens = doc.at("vocabulary").get<std::vector<std::string>>();
        if (tokens.empty() || tokens.front() != TemperVocabulary::kUnknownToken) {
            throw ParseError("checkpoint vocabulary must start with the unknown token");
        }
        for (std::size_t i = 1; i < tokens.size(); ++i) vocab.add(tokens[i]);
        const LogBase base = doc.at("log_base").get<std::string>() == "e" ? LogBase::natural : LogBase::ten;
        InputEncoder encoder(std::move(vocab), scaler_from_json(doc.at("scalers").at("branch")),
                             scaler_from_json(doc.at("scalers").at("trunk")), base);

        DeepOFormerModel model =
            DeepOFormerModel::build(parse_variant(doc.at("variant").get<std::string>()), d,
                                    doc.at("category_sizes").get<std::vector<std::size_t>>(), doc.at("seed"));
        detail::assign_parameters(model.parameters(), doc.at("parameters"));
        return {std::move(model), std::move(encoder)};
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": malformed checkpoint: " + e.what());
    }
}

}  // namespace deepoformer
