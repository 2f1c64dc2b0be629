#pragma once

#include "deepoformer/tape.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace deepoformer::nn {

using ad::Parameter;
using ad::ParameterSet;
using ad::Tape;
using ad::Tensor;
using ad::Var;

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kLayerNormEps = 1e-5;
// Attention rows must sum to one within this bound in debug mode.
inline constexpr double kAttentionRowTolerance = 1e-9;

enum class Mode { train, eval };

// Per-pass state threaded through the blocks. The generator is only touched
// in train mode (dropout masks) and may be null in eval mode.
struct ForwardContext {
    Tape& tape;
    Mode mode = Mode::eval;
    std::mt19937_64* rng = nullptr;

    bool training() const noexcept { return mode == Mode::train; }
};

// Numerically stable softmax of a plain vector (max subtraction).
std::vector<double> softmax(std::span<const double> logits);

Var leaky_relu(Var x, double slope = kLeakySlope);
Var softmax_rows(Var x);
// Row-wise (x - mean) / sqrt(var + eps), then gain * . + bias (1 x n each).
Var layer_norm(Var x, Var gain, Var bias, double eps = kLayerNormEps);

// Inverted dropout: survivors scaled by 1/(1-p). Identity in eval mode or p == 0.
Tensor dropout_mask(std::size_t rows, std::size_t cols, double p, std::mt19937_64& rng);
Var dropout(ForwardContext& ctx, Var x, double p);

// softmax(q k^T / sqrt(k)) v for a single sequence (rows = tokens).
Var attention(Var q, Var k, Var v);

// Batched multi-head scaled dot-product attention. q, k, v are
// (groups * seq_len) x (n_heads * head_dim); each group of seq_len rows is
// one sequence and heads occupy consecutive column blocks. Dropout with
// probability `prob_dropout` is applied to the attention probabilities in
// train mode. Returns the concatenated head outputs, same shape as v.
Var multi_head_attention_core(ForwardContext& ctx, Var q, Var k, Var v, std::size_t n_heads, std::size_t seq_len,
                              double prob_dropout);

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);
Tensor normal_init(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng);

class Linear {
public:
    Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng,
           bool with_bias = true);

    Var forward(Tape& tape, Var x) const;
    std::size_t in_features() const noexcept { return weight_->value.rows(); }
    std::size_t out_features() const noexcept { return weight_->value.cols(); }
    Parameter& weight() const noexcept { return *weight_; }
    // Null for a layer built without bias.
    Parameter* bias() const noexcept { return bias_; }

private:
    Parameter* weight_;
    Parameter* bias_ = nullptr;
};

class LayerNorm {
public:
    LayerNorm(ParameterSet& params, const std::string& name, std::size_t dim);

    Var forward(Tape& tape, Var x) const;
    Parameter& gain() const noexcept { return *gain_; }
    Parameter& bias() const noexcept { return *bias_; }

private:
    Parameter* gain_;
    Parameter* bias_;
};

// Stack of Linear layers with Leaky ReLU between them; the activation on the
// final layer is optional.
class Mlp {
public:
    Mlp(ParameterSet& params, const std::string& name, std::span<const std::size_t> widths, std::mt19937_64& rng,
        bool activate_output, double slope = kLeakySlope);

    Var forward(Tape& tape, Var x) const;
    const std::vector<Linear>& layers() const noexcept { return layers_; }
    std::size_t out_features() const noexcept { return layers_.back().out_features(); }
    void set_slope(double slope) noexcept { slope_ = slope; }

private:
    std::vector<Linear> layers_;
    bool activate_output_;
    double slope_;
};

// Lookup table mapping a category id to a learned vector.
class ColumnEmbedding {
public:
    ColumnEmbedding(ParameterSet& params, const std::string& name, std::size_t vocab_size, std::size_t dim,
                    std::mt19937_64& rng);

    Var forward(Tape& tape, std::span<const int> ids) const;
    // Plain row lookup; throws ArgumentError for ids outside the table.
    std::vector<double> lookup(int id) const;
    std::size_t vocab_size() const noexcept { return table_->value.rows(); }
    Parameter& table() const noexcept { return *table_; }

private:
    Parameter* table_;
};

struct AttentionConfig {
    std::size_t n_heads = 3;
    std::size_t head_dim = 48;
    std::size_t model_dim = 48;
    double attention_dropout = 0.2;
    double ffn_dropout = 0.1;

    std::size_t concat_dim() const noexcept { return n_heads * head_dim; }
    // Throws ConfigError on zero counts or probabilities outside [0, 1).
    void validate() const;
};

// Post-norm Transformer encoder layer:
//   h = LN1(x + W_o * MHA(x)),  out = LN2(h + FFN(h))
// with FFN(h) = W_2 * dropout(leaky_relu(W_1 h)) and hidden width 4 * model_dim.
// The key projection has no bias: it would add the same q.b term to every
// logit of a row, which softmax cancels.
class TransformerBlock {
public:
    TransformerBlock(ParameterSet& params, const std::string& name, const AttentionConfig& config,
                     std::mt19937_64& rng, double slope = kLeakySlope);

    Var forward(ForwardContext& ctx, Var x, std::size_t seq_len) const;
    Var attention_sublayer(ForwardContext& ctx, Var x, std::size_t seq_len) const;
    Var ffn_sublayer(ForwardContext& ctx, Var x) const;

    const AttentionConfig& config() const noexcept { return config_; }
    std::size_t ffn_hidden_width() const noexcept { return ffn_in_.out_features(); }

    const Linear& query() const noexcept { return query_; }
    const Linear& key() const noexcept { return key_; }
    const Linear& value() const noexcept { return value_; }
    const Linear& output() const noexcept { return output_; }
    const Linear& ffn_in() const noexcept { return ffn_in_; }
    const Linear& ffn_out() const noexcept { return ffn_out_; }
    const LayerNorm& norm1() const noexcept { return norm1_; }
    const LayerNorm& norm2() const noexcept { return norm2_; }

private:
    AttentionConfig config_;
    double slope_;
    Linear query_;
    Linear key_;
    Linear value_;
    Linear output_;
    Linear ffn_in_;
    Linear ffn_out_;
    LayerNorm norm1_;
    LayerNorm norm2_;
};

}  // namespace deepoformer::nn
