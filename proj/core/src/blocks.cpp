#include "deepoformer/blocks.hpp"

#include "deepoformer/errors.hpp"
#include "deepoformer/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace deepoformer::nn {

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out(logits.size());
    if (logits.empty()) return out;
    const double mx = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

Var leaky_relu(Var x, double slope) {
    const Tensor& xv = x.value();
    Tensor out(xv.rows(), xv.cols());
    double closest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const double v = xv[i];
        out[i] = v > 0.0 ? v : slope * v;
        closest = std::min(closest, std::abs(v));
    }
    auto& diag = x.tape().diagnostics();
    diag.min_kink_distance = std::min(diag.min_kink_distance, closest);
    return x.tape().record("leaky_relu", std::move(out), {x}, [slope](ad::BackwardContext& ctx) {
        Tensor* gx = ctx.input_grad(0);
        if (!gx) return;
        const Tensor& g = ctx.grad_output();
        const Tensor& in = ctx.input(0);
        for (std::size_t i = 0; i < in.size(); ++i) (*gx)[i] += g[i] * (in[i] > 0.0 ? 1.0 : slope);
    });
}

Var softmax_rows(Var x) {
    const Tensor& xv = x.value();
    Tensor out(xv.rows(), xv.cols());
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        const auto probs = softmax(xv.row_span(r));
        std::copy(probs.begin(), probs.end(), out.row_span(r).begin());
    }
    return x.tape().record("softmax_rows", std::move(out), {x}, [](ad::BackwardContext& ctx) {
        Tensor* gx = ctx.input_grad(0);
        if (!gx) return;
        const Tensor& g = ctx.grad_output();
        const Tensor& y = ctx.output();
        for (std::size_t r = 0; r < y.rows(); ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
            for (std::size_t c = 0; c < y.cols(); ++c) (*gx)(r, c) += y(r, c) * (g(r, c) - dot);
        }
    });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    const Tensor& xv = x.value();
    const Tensor& gv = gain.value();
    const Tensor& bv = bias.value();
    const std::size_t m = xv.rows(), n = xv.cols();
    if (gv.rows() != 1 || gv.cols() != n || !gv.same_shape(bv)) {
        throw ShapeError("layer_norm: input " + xv.shape_string() + " with gain " + gv.shape_string() +
                         " and bias " + bv.shape_string());
    }
    Tensor xhat(m, n);
    std::vector<double> inv_std(m);
    Tensor out(m, n);
    for (std::size_t r = 0; r < m; ++r) {
        double mu = 0.0;
        for (std::size_t c = 0; c < n; ++c) mu += xv(r, c);
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t c = 0; c < n; ++c) var += (xv(r, c) - mu) * (xv(r, c) - mu);
        var /= static_cast<double>(n);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < n; ++c) {
            xhat(r, c) = (xv(r, c) - mu) * inv_std[r];
            out(r, c) = gv[c] * xhat(r, c) + bv[c];
        }
    }
    return x.tape().record(
        "layer_norm", std::move(out), {x, gain, bias},
        [xhat = std::move(xhat), inv_std = std::move(inv_std)](ad::BackwardContext& ctx) {
            const Tensor& g = ctx.grad_output();
            const Tensor& gamma = ctx.input(1);
            const std::size_t m = g.rows(), n = g.cols();
            if (Tensor* gx = ctx.input_grad(0)) {
                std::vector<double> dxhat(n);
                for (std::size_t r = 0; r < m; ++r) {
                    double mean_d = 0.0, mean_dx = 0.0;
                    for (std::size_t c = 0; c < n; ++c) {
                        dxhat[c] = g(r, c) * gamma[c];
                        mean_d += dxhat[c];
                        mean_dx += dxhat[c] * xhat(r, c);
                    }
                    mean_d /= static_cast<double>(n);
                    mean_dx /= static_cast<double>(n);
                    for (std::size_t c = 0; c < n; ++c)
                        (*gx)(r, c) += inv_std[r] * (dxhat[c] - mean_d - xhat(r, c) * mean_dx);
                }
            }
            if (Tensor* gg = ctx.input_grad(1)) {
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = 0; c < n; ++c) (*gg)[c] += g(r, c) * xhat(r, c);
            }
            if (Tensor* gb = ctx.input_grad(2)) {
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = 0; c < n; ++c) (*gb)[c] += g(r, c);
            }
        });
}

Tensor dropout_mask(std::size_t rows, std::size_t cols, double p, std::mt19937_64& rng) {
    if (!(p >= 0.0 && p < 1.0)) throw ArgumentError("dropout probability must be in [0, 1), got " + std::to_string(p));
    Tensor mask(rows, cols);
    const double keep_scale = 1.0 / (1.0 - p);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (double& v : mask.data()) v = uniform(rng) < p ? 0.0 : keep_scale;
    return mask;
}

Var dropout(ForwardContext& ctx, Var x, double p) {
    if (!(p >= 0.0 && p < 1.0)) throw ArgumentError("dropout probability must be in [0, 1), got " + std::to_string(p));
    if (!ctx.training() || p == 0.0) return x;
    if (ctx.rng == nullptr) throw ArgumentError("dropout in train mode needs a random generator");
    Var mask = ctx.tape.constant(dropout_mask(x.rows(), x.cols(), p, *ctx.rng));
    return ad::mul(x, mask);
}

Var attention(Var q, Var k, Var v) {
    Tape& tape = q.tape();
    ForwardContext ctx{tape, Mode::eval, nullptr};
    return multi_head_attention_core(ctx, q, k, v, 1, q.rows(), 0.0);
}

Var multi_head_attention_core(ForwardContext& ctx, Var q, Var k, Var v, std::size_t n_heads, std::size_t seq_len,
                              double prob_dropout) {
    const Tensor& qv = q.value();
    const Tensor& kv = k.value();
    const Tensor& vv = v.value();
    if (!qv.same_shape(kv) || !qv.same_shape(vv)) {
        throw ShapeError("attention: q " + qv.shape_string() + ", k " + kv.shape_string() + ", v " +
                         vv.shape_string() + " must share a shape");
    }
    if (n_heads == 0 || seq_len == 0 || qv.cols() % n_heads != 0 || qv.rows() % seq_len != 0) {
        throw ShapeError("attention: shape " + qv.shape_string() + " does not split into " +
                         std::to_string(n_heads) + " heads and sequences of length " + std::to_string(seq_len));
    }
    const std::size_t rows = qv.rows();
    const std::size_t groups = rows / seq_len;
    const std::size_t head_dim = qv.cols() / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    const bool drop = ctx.training() && prob_dropout > 0.0;
    if (drop && ctx.rng == nullptr) throw ArgumentError("attention dropout in train mode needs a random generator");

    // probs/mask laid out [group][head][i][j]
    const std::size_t block = seq_len * seq_len;
    std::vector<double> probs(groups * n_heads * block);
    std::vector<double> mask;
    if (drop) {
        const Tensor m = dropout_mask(1, probs.size(), prob_dropout, *ctx.rng);
        mask.assign(m.data().begin(), m.data().end());
    }

    auto& diag = ctx.tape.diagnostics();
    Tensor out(rows, qv.cols());
    std::vector<double> logits(seq_len);
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t h = 0; h < n_heads; ++h) {
            const std::size_t col0 = h * head_dim;
            double* p = probs.data() + (g * n_heads + h) * block;
            for (std::size_t i = 0; i < seq_len; ++i) {
                const std::size_t qi = g * seq_len + i;
                for (std::size_t j = 0; j < seq_len; ++j) {
                    const std::size_t kj = g * seq_len + j;
                    double dot = 0.0;
                    for (std::size_t d = 0; d < head_dim; ++d) dot += qv(qi, col0 + d) * kv(kj, col0 + d);
                    logits[j] = dot * inv_sqrt;
                }
                const auto row = softmax(logits);
                std::copy(row.begin(), row.end(), p + i * seq_len);
                if (diag.debug) {
                    double total = 0.0;
                    for (double x : row) total += x;
                    const double err = std::abs(total - 1.0);
                    diag.max_attention_row_error = std::max(diag.max_attention_row_error, err);
                    if (err > kAttentionRowTolerance) {
                        throw NumericError("attention row sums to " + std::to_string(total));
                    }
                }
                for (std::size_t j = 0; j < seq_len; ++j) {
                    const double w = drop ? p[i * seq_len + j] * mask[(g * n_heads + h) * block + i * seq_len + j]
                                          : p[i * seq_len + j];
                    if (w == 0.0) continue;
                    const std::size_t vj = g * seq_len + j;
                    for (std::size_t d = 0; d < head_dim; ++d) out(qi, col0 + d) += w * vv(vj, col0 + d);
                }
            }
        }
    }

    return ctx.tape.record(
        "attention", std::move(out), {q, k, v},
        [probs = std::move(probs), mask = std::move(mask), n_heads, seq_len, head_dim,
         inv_sqrt](ad::BackwardContext& bctx) {
            const Tensor& gout = bctx.grad_output();
            const Tensor& qv = bctx.input(0);
            const Tensor& kv = bctx.input(1);
            const Tensor& vv = bctx.input(2);
            Tensor* gq = bctx.input_grad(0);
            Tensor* gk = bctx.input_grad(1);
            Tensor* gv = bctx.input_grad(2);
            const std::size_t groups = qv.rows() / seq_len;
            const std::size_t block = seq_len * seq_len;
            const bool masked = !mask.empty();
            std::vector<double> dp(block), ds(block);
            for (std::size_t g = 0; g < groups; ++g) {
                for (std::size_t h = 0; h < n_heads; ++h) {
                    const std::size_t col0 = h * head_dim;
                    const std::size_t base = (g * n_heads + h) * block;
                    const double* p = probs.data() + base;
                    // dP' = dOut V^T, dV += P'^T dOut
                    for (std::size_t i = 0; i < seq_len; ++i) {
                        const std::size_t qi = g * seq_len + i;
                        for (std::size_t j = 0; j < seq_len; ++j) {
                            const std::size_t vj = g * seq_len + j;
                            const double m = masked ? mask[base + i * seq_len + j] : 1.0;
                            double dot = 0.0;
                            for (std::size_t d = 0; d < head_dim; ++d) dot += gout(qi, col0 + d) * vv(vj, col0 + d);
                            dp[i * seq_len + j] = dot * m;
                            if (gv) {
                                const double w = p[i * seq_len + j] * m;
                                for (std::size_t d = 0; d < head_dim; ++d)
                                    (*gv)(vj, col0 + d) += w * gout(qi, col0 + d);
                            }
                        }
                    }
                    if (!gq && !gk) continue;
                    // softmax backward per row
                    for (std::size_t i = 0; i < seq_len; ++i) {
                        double dot = 0.0;
                        for (std::size_t j = 0; j < seq_len; ++j) dot += dp[i * seq_len + j] * p[i * seq_len + j];
                        for (std::size_t j = 0; j < seq_len; ++j)
                            ds[i * seq_len + j] = p[i * seq_len + j] * (dp[i * seq_len + j] - dot) * inv_sqrt;
                    }
                    for (std::size_t i = 0; i < seq_len; ++i) {
                        const std::size_t qi = g * seq_len + i;
                        for (std::size_t j = 0; j < seq_len; ++j) {
                            const std::size_t kj = g * seq_len + j;
                            const double s = ds[i * seq_len + j];
                            if (s == 0.0) continue;
                            for (std::size_t d = 0; d < head_dim; ++d) {
                                if (gq) (*gq)(qi, col0 + d) += s * kv(kj, col0 + d);
                                if (gk) (*gk)(kj, col0 + d) += s * qv(qi, col0 + d);
                            }
                        }
                    }
                }
            }
        });
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    if (fan_in == 0 || fan_out == 0) throw ConfigError("linear layers need non-zero dimensions");
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor t(fan_in, fan_out);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

Tensor normal_init(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
    if (rows == 0 || cols == 0) throw ConfigError("embedding tables need non-zero dimensions");
    std::normal_distribution<double> dist(0.0, stddev);
    Tensor t(rows, cols);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

Linear::Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out,
               std::mt19937_64& rng, bool with_bias)
    : weight_(&params.add(name + ".weight", glorot_uniform(in, out, rng))) {
    if (with_bias) bias_ = &params.add(name + ".bias", Tensor(1, out));
}

Var Linear::forward(Tape& tape, Var x) const {
    if (!bias_) return ad::matmul(x, tape.parameter(*weight_));
    return ad::linear(x, tape.parameter(*weight_), tape.parameter(*bias_));
}

LayerNorm::LayerNorm(ParameterSet& params, const std::string& name, std::size_t dim)
    : gain_(&params.add(name + ".gain", Tensor(1, dim, 1.0))), bias_(&params.add(name + ".bias", Tensor(1, dim))) {}

Var LayerNorm::forward(Tape& tape, Var x) const {
    return layer_norm(x, tape.parameter(*gain_), tape.parameter(*bias_));
}

Mlp::Mlp(ParameterSet& params, const std::string& name, std::span<const std::size_t> widths, std::mt19937_64& rng,
         bool activate_output, double slope)
    : activate_output_(activate_output), slope_(slope) {
    if (widths.size() < 2) throw ConfigError("mlp '" + name + "' needs at least input and output widths");
    layers_.reserve(widths.size() - 1);
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
        layers_.emplace_back(params, name + "." + std::to_string(i), widths[i], widths[i + 1], rng);
}

Var Mlp::forward(Tape& tape, Var x) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        x = layers_[i].forward(tape, x);
        if (i + 1 < layers_.size() || activate_output_) x = leaky_relu(x, slope_);
    }
    return x;
}

ColumnEmbedding::ColumnEmbedding(ParameterSet& params, const std::string& name, std::size_t vocab_size,
                                 std::size_t dim, std::mt19937_64& rng)
    : table_(&params.add(name + ".table", normal_init(vocab_size, dim, 0.02, rng))) {}

Var ColumnEmbedding::forward(Tape& tape, std::span<const int> ids) const {
    return ad::gather_rows(tape.parameter(*table_), ids);
}

std::vector<double> ColumnEmbedding::lookup(int id) const {
    const Tensor& t = table_->value;
    if (id < 0 || static_cast<std::size_t>(id) >= t.rows()) {
        throw ArgumentError("embedding id " + std::to_string(id) + " out of range for table with " +
                            std::to_string(t.rows()) + " rows");
    }
    auto row = t.row_span(static_cast<std::size_t>(id));
    return {row.begin(), row.end()};
}

void AttentionConfig::validate() const {
    if (n_heads == 0 || head_dim == 0 || model_dim == 0) throw ConfigError("attention dimensions must be >= 1");
    auto valid_prob = [](double p) { return p >= 0.0 && p < 1.0; };
    if (!valid_prob(attention_dropout) || !valid_prob(ffn_dropout))
        throw ConfigError("dropout probabilities must lie in [0, 1)");
}

namespace {
const AttentionConfig& validated(const AttentionConfig& c) {
    c.validate();
    return c;
}
}  // namespace

TransformerBlock::TransformerBlock(ParameterSet& params, const std::string& name, const AttentionConfig& config,
                                   std::mt19937_64& rng, double slope)
    : config_(validated(config)),
      slope_(slope),
      query_(params, name + ".query", config.model_dim, config.concat_dim(), rng),
      key_(params, name + ".key", config.model_dim, config.concat_dim(), rng, false),
      value_(params, name + ".value", config.model_dim, config.concat_dim(), rng),
      output_(params, name + ".attn_out", config.concat_dim(), config.model_dim, rng),
      ffn_in_(params, name + ".ffn_in", config.model_dim, 4 * config.model_dim, rng),
      ffn_out_(params, name + ".ffn_out", 4 * config.model_dim, config.model_dim, rng),
      norm1_(params, name + ".norm1", config.model_dim),
      norm2_(params, name + ".norm2", config.model_dim) {
    if (ffn_in_.out_features() != 4 * config_.model_dim) throw ConfigError("FFN hidden width must be 4 x model_dim");
}

Var TransformerBlock::attention_sublayer(ForwardContext& ctx, Var x, std::size_t seq_len) const {
    if (x.cols() != config_.model_dim) {
        throw ShapeError("transformer block expects width " + std::to_string(config_.model_dim) + ", got " +
                         x.value().shape_string());
    }
    Tape& tape = ctx.tape;
    Var q = query_.forward(tape, x);
    Var k = key_.forward(tape, x);
    Var v = value_.forward(tape, x);
    Var heads = multi_head_attention_core(ctx, q, k, v, config_.n_heads, seq_len, config_.attention_dropout);
    Var projected = output_.forward(tape, heads);
    return norm1_.forward(tape, ad::add(x, projected));
}

Var TransformerBlock::ffn_sublayer(ForwardContext& ctx, Var x) const {
    Tape& tape = ctx.tape;
    Var hidden = leaky_relu(ffn_in_.forward(tape, x), slope_);
    hidden = dropout(ctx, hidden, config_.ffn_dropout);
    Var projected = ffn_out_.forward(tape, hidden);
    return norm2_.forward(tape, ad::add(x, projected));
}

Var TransformerBlock::forward(ForwardContext& ctx, Var x, std::size_t seq_len) const {
    return ffn_sublayer(ctx, attention_sublayer(ctx, x, seq_len));
}

}  // namespace deepoformer::nn
