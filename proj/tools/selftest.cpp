#include "selftest.hpp"

#include "deepoformer/blocks.hpp"
#include "deepoformer/evaluation.hpp"
#include "deepoformer/grad_check.hpp"
#include "deepoformer/ops.hpp"
#include "deepoformer/synthgen.hpp"
#include "deepoformer/training.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <random>

namespace deepoformer::selftest {
namespace {

using ad::GradCheckOptions;
using ad::GradCheckReport;
using ad::Tape;
using ad::Tensor;
using ad::Var;

// A finite difference of step h straddles a Leaky ReLU kink when a
// pre-activation lies closer than h to zero; such draws are resampled.
constexpr double kKinkMargin = 1e-4;
constexpr int kMaxDraws = 8;
constexpr double kOracleTolerance = 1e-12;
constexpr std::size_t kWarmupSteps = 300;
constexpr double kWarmupLearningRate = 1e-2;

Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> gauss(0.0, scale);
    Tensor t(rows, cols);
    for (double& v : t.data()) v = gauss(rng);
    return t;
}

// Scalar summary with a generic gradient: sum(out * weights).
Var project(Var out, const Tensor& weights) { return ad::sum(ad::mul(out, out.tape().constant(weights))); }

std::string describe(const GradCheckReport& r, int draws) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu entries, max rel error %.2e", r.checked, r.max_rel_error);
    std::string s = buf;
    if (!r.worst.empty()) {
        std::snprintf(buf, sizeof buf, " at %s (%.3e vs %.3e)", r.worst.c_str(), r.worst_analytic, r.worst_numeric);
        s += buf;
    }
    if (draws > 1) s += ", " + std::to_string(draws) + " draws";
    for (const std::string& f : r.failures) s += "\n    " + f;
    return s;
}

// Runs `attempt` with fresh draws until no value sits near a kink.
Check kink_safe(const std::string& name, std::mt19937_64& rng,
                const std::function<GradCheckReport(std::mt19937_64&)>& attempt) {
    GradCheckReport report;
    int draws = 0;
    do {
        report = attempt(rng);
        ++draws;
    } while (report.min_kink_distance < kKinkMargin && draws < kMaxDraws);
    return {name, report.passed && report.min_kink_distance >= kKinkMargin, describe(report, draws)};
}

std::vector<Check> block_checks(std::uint64_t seed) {
    std::vector<Check> out;
    std::mt19937_64 rng(seed);
    const std::string tag = " (seed " + std::to_string(seed) + ")";

    auto input_check = [&](const std::string& name, std::vector<Tensor> inputs, Tensor weights,
                           std::function<Var(Tape&, std::span<const Var>)> f) {
        const auto report = ad::grad_check(
            [&](Tape& t, std::span<const Var> v) { return project(f(t, v), weights); }, std::move(inputs));
        out.push_back({name + tag, report.passed, describe(report, 1)});
    };

    input_check("linear", {random_tensor(3, 4, rng), random_tensor(4, 5, rng), random_tensor(1, 5, rng)},
                random_tensor(3, 5, rng), [](Tape&, std::span<const Var> v) { return ad::linear(v[0], v[1], v[2]); });

    input_check("elementwise ops", {random_tensor(3, 4, rng), random_tensor(3, 4, rng), random_tensor(4, 2, rng)},
                random_tensor(3, 4, rng), [](Tape&, std::span<const Var> v) {
                    Var pos = ad::add_scalar(ad::square(v[1]), 1.0);
                    Var a = ad::div(ad::exp(ad::scale(v[0], 0.3)), pos);
                    Var b = ad::add(ad::log(pos), ad::pow(pos, 1.5));
                    Var c = ad::sub(ad::mul(a, b), ad::mean(v[0], ad::Axis::rows));
                    Var m = ad::matmul(ad::transpose(ad::transpose(v[0])), v[2]);
                    Var d = ad::concat({m, ad::slice_cols(c, 1, 3)}, ad::Axis::cols);
                    Var e = ad::transpose(ad::reshape(d, 4, 3));
                    return ad::add(ad::add(c, e), ad::sum(ad::slice_rows(v[1], 0, 1), ad::Axis::cols));
                });

    input_check("gather_rows", {random_tensor(5, 3, rng)}, random_tensor(4, 3, rng),
                [](Tape&, std::span<const Var> v) {
                    const std::vector<int> ids{0, 2, 2, 4};
                    return ad::gather_rows(v[0], ids);
                });

    {
        const Tensor w = random_tensor(4, 5, rng);
        out.push_back(kink_safe("leaky_relu" + tag, rng, [&](std::mt19937_64& r) {
            return ad::grad_check([&](Tape&, std::span<const Var> v) { return project(nn::leaky_relu(v[0]), w); },
                                  {random_tensor(4, 5, r)});
        }));
    }

    input_check("softmax_rows", {random_tensor(3, 5, rng)}, random_tensor(3, 5, rng),
                [](Tape&, std::span<const Var> v) { return nn::softmax_rows(v[0]); });

    input_check("layer_norm", {random_tensor(3, 6, rng), random_tensor(1, 6, rng), random_tensor(1, 6, rng)},
                random_tensor(3, 6, rng),
                [](Tape&, std::span<const Var> v) { return nn::layer_norm(v[0], v[1], v[2]); });

    const std::uint64_t mask_seed = rng();
    input_check("dropout", {random_tensor(4, 5, rng)}, random_tensor(4, 5, rng),
                [mask_seed](Tape& t, std::span<const Var> v) {
                    std::mt19937_64 masks(mask_seed);
                    nn::ForwardContext ctx{t, nn::Mode::train, &masks};
                    return nn::dropout(ctx, v[0], 0.3);
                });

    input_check("attention", {random_tensor(4, 3, rng), random_tensor(4, 3, rng), random_tensor(4, 3, rng)},
                random_tensor(4, 3, rng),
                [](Tape&, std::span<const Var> v) { return nn::attention(v[0], v[1], v[2]); });

    input_check("multi_head_attention",
                {random_tensor(6, 8, rng), random_tensor(6, 8, rng), random_tensor(6, 8, rng)},
                random_tensor(6, 8, rng), [mask_seed](Tape& t, std::span<const Var> v) {
                    std::mt19937_64 masks(mask_seed);
                    nn::ForwardContext ctx{t, nn::Mode::train, &masks};
                    t.diagnostics().debug = true;
                    return nn::multi_head_attention_core(ctx, v[0], v[1], v[2], 2, 3, 0.2);
                });

    auto param_check = [&](const std::string& name, ad::ParameterSet& params, std::size_t limit,
                           const std::function<Var(Tape&)>& f) {
        GradCheckOptions opts;
        opts.max_entries_per_tensor = limit;
        const auto report = ad::grad_check(params, f, opts);
        return Check{name + tag, report.passed && report.min_kink_distance >= kKinkMargin, describe(report, 1)};
    };

    {
        ad::ParameterSet params;
        nn::Linear layer(params, "linear", 4, 3, rng);
        const Tensor x = random_tensor(5, 4, rng), w = random_tensor(5, 3, rng);
        out.push_back(param_check("Linear", params, 0, [&](Tape& t) { return project(layer.forward(t, t.constant(x)), w); }));
    }
    {
        const std::vector<std::size_t> widths{4, 6, 6, 3};
        const Tensor w = random_tensor(5, 3, rng);
        out.push_back(kink_safe("Mlp" + tag, rng, [&](std::mt19937_64& r) {
            ad::ParameterSet params;
            nn::Mlp mlp(params, "mlp", widths, r, true);
            const Tensor x = random_tensor(5, 4, r);
            return ad::grad_check(params, [&](Tape& t) { return project(mlp.forward(t, t.constant(x)), w); });
        }));
    }
    {
        ad::ParameterSet params;
        nn::LayerNorm norm(params, "norm", 5);
        for (auto& p : params) p->value = random_tensor(1, 5, rng);
        const Tensor x = random_tensor(3, 5, rng), w = random_tensor(3, 5, rng);
        out.push_back(param_check("LayerNorm", params, 0, [&](Tape& t) { return project(norm.forward(t, t.constant(x)), w); }));
    }
    {
        ad::ParameterSet params;
        nn::ColumnEmbedding emb(params, "embedding", 4, 3, rng);
        const std::vector<int> ids{1, 3, 1, 0};
        const Tensor w = random_tensor(4, 3, rng);
        out.push_back(param_check("ColumnEmbedding", params, 0, [&](Tape& t) { return project(emb.forward(t, ids), w); }));
    }
    {
        const nn::AttentionConfig small{2, 4, 4, 0.2, 0.1};
        const Tensor w = random_tensor(6, 4, rng);
        out.push_back(kink_safe("TransformerBlock input" + tag, rng, [&](std::mt19937_64& r) {
            ad::ParameterSet params;
            nn::TransformerBlock block(params, "block", small, r);
            const std::uint64_t masks_seed = r();
            return ad::grad_check(
                [&](Tape& t, std::span<const Var> v) {
                    std::mt19937_64 masks(masks_seed);
                    nn::ForwardContext ctx{t, nn::Mode::train, &masks};
                    return project(block.forward(ctx, v[0], 3), w);
                },
                {random_tensor(6, 4, r)});
        }));
    }
    {
        const Tensor w = random_tensor(6, 48, rng);
        out.push_back(kink_safe("TransformerBlock parameters" + tag, rng, [&](std::mt19937_64& r) {
            ad::ParameterSet params;
            nn::TransformerBlock block(params, "block", nn::AttentionConfig{}, r);
            const Tensor x = random_tensor(6, 48, r);
            const std::uint64_t masks_seed = r();
            GradCheckOptions opts;
            opts.max_entries_per_tensor = 48;
            return ad::grad_check(
                params,
                [&](Tape& t) {
                    std::mt19937_64 masks(masks_seed);
                    nn::ForwardContext ctx{t, nn::Mode::train, &masks};
                    return project(block.forward(ctx, t.constant(x), 3), w);
                },
                opts);
        }));
    }

    {
        std::uniform_real_distribution<double> life(4.0, 10.0);
        Tensor targets(4, 1);
        for (double& y : targets.data()) y = life(rng);
        Tensor preds = targets;
        for (double& y : preds.data()) y += 0.5 * (life(rng) - 7.0);
        for (LossKind kind : {LossKind::ml2re, LossKind::mse}) {
            const LossConfig config{kind, kMl2reEpsilon};
            const auto report = ad::grad_check(
                [&](Tape& t, std::span<const Var> v) { return compute_loss(config, t.constant(targets), v[0]); },
                {preds});
            out.push_back({std::string(to_string(kind)) + " loss" + tag, report.passed, describe(report, 1)});
        }
    }
    return out;
}

std::vector<Check> model_checks(std::uint64_t seed, std::size_t entries_per_tensor) {
    std::vector<Check> out;
    std::mt19937_64 rng(seed);
    const std::string tag = " (seed " + std::to_string(seed) + ")";

    // Four records from four different synthetic curves.
    FixtureOptions fixture;
    fixture.n_curves = 4;
    const auto curves = default_fixture(seed, fixture);
    std::vector<FatigueRecord> batch;
    for (const SNCurve& c : curves) batch.push_back(c.records.front());
    const InputEncoder encoder = InputEncoder::fit(batch);
    const ModelInput input = encoder.encode(batch);
    Tensor targets(batch.size(), 1);
    for (std::size_t i = 0; i < batch.size(); ++i) targets[i] = batch[i].log_n;

    // mse_loss shares the full architecture; its loss is covered block-wise.
    const LossConfig loss{};
    for (Variant variant : all_variants()) {
        if (variant == Variant::mse_loss) continue;
        const std::string name = "model " + std::string(to_string(variant)) + " + " + std::string(to_string(loss.kind));
        out.push_back(kink_safe(name + tag, rng, [&](std::mt19937_64& r) {
            DeepOFormerModel model = DeepOFormerModel::build(variant, ModelDims{}, encoder.category_sizes(), r());
            model.set_debug(true);
            const std::uint64_t masks_seed = r();
            auto loss_at = [&](Tape& t) {
                std::mt19937_64 masks(masks_seed);
                nn::ForwardContext ctx{t, nn::Mode::train, &masks};
                return compute_loss(loss, t.constant(targets), model.forward(ctx, input));
            };
            // Fit the batch under the same dropout masks first: near a zero
            // residual the rounding noise of the central difference stays
            // well below the absolute floor.
            ad::AdamState adam(model.parameters(), ad::AdamConfig{kWarmupLearningRate});
            for (std::size_t step = 0; step < kWarmupSteps; ++step) {
                Tape t;
                model.parameters().zero_grad();
                t.backward(loss_at(t));
                ad::adam_step(model.parameters(), adam);
            }
            GradCheckOptions opts;
            opts.max_entries_per_tensor = entries_per_tensor;
            return ad::grad_check(model.parameters(), loss_at, opts);
        }));
    }
    return out;
}

long double oracle_r2(const std::vector<double>& y, const std::vector<double>& p) {
    long double mean = 0;
    for (double v : y) mean += v;
    mean /= static_cast<long double>(y.size());
    long double res = 0, tot = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        res += (static_cast<long double>(y[i]) - p[i]) * (static_cast<long double>(y[i]) - p[i]);
        tot += (y[i] - mean) * (y[i] - mean);
    }
    return 1.0L - res / (tot + static_cast<long double>(kMetricEpsilon));
}

long double oracle_mae(const std::vector<double>& y, const std::vector<double>& p) {
    long double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += std::fabs(static_cast<long double>(y[i]) - p[i]);
    return s / static_cast<long double>(y.size());
}

long double oracle_mre(const std::vector<double>& y, const std::vector<double>& p) {
    long double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const long double a = std::pow(10.0L, static_cast<long double>(y[i]));
        const long double b = std::pow(10.0L, static_cast<long double>(p[i]));
        s += std::fabs(a - b) / (std::fabs(a) + static_cast<long double>(kMetricEpsilon));
    }
    return s / static_cast<long double>(y.size());
}

}  // namespace

std::vector<Check> gradient_checks(const Options& options) {
    std::vector<Check> out;
    for (std::size_t s = 0; s < options.seeds; ++s) {
        const std::uint64_t seed = options.base_seed + s;
        for (Check& c : block_checks(seed)) out.push_back(std::move(c));
        for (Check& c : model_checks(seed, options.model_entries_per_tensor)) out.push_back(std::move(c));
    }
    return out;
}

std::vector<Check> metric_checks(const Options& options) {
    std::vector<Check> out;
    std::mt19937_64 rng(options.base_seed);
    std::uniform_int_distribution<std::size_t> length(2, 64);
    std::uniform_real_distribution<double> life(3.0, 9.0);
    std::normal_distribution<double> miss(0.0, 0.4);
    double worst[3] = {0.0, 0.0, 0.0};
    for (std::size_t v = 0; v < options.oracle_vectors; ++v) {
        const std::size_t n = length(rng);
        std::vector<double> y(n), p(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = life(rng);
            p[i] = y[i] + miss(rng);
        }
        worst[0] = std::max(worst[0], static_cast<double>(std::fabs(r_squared(y, p) - oracle_r2(y, p))));
        worst[1] = std::max(worst[1], static_cast<double>(std::fabs(mae(y, p) - oracle_mae(y, p))));
        worst[2] = std::max(worst[2], static_cast<double>(std::fabs(mre(y, p) - oracle_mre(y, p))));
    }
    const char* names[3] = {"r_squared", "mae", "mre"};
    for (int k = 0; k < 3; ++k) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%zu vectors, max |diff| %.2e", options.oracle_vectors, worst[k]);
        out.push_back({std::string(names[k]) + " vs oracle", worst[k] <= kOracleTolerance, buf});
    }

    const std::vector<double> y{1, 2, 3}, p{1.1, 1.9, 3.2};
    const MetricSet m = compute_metrics(y, p);
    const bool ok = std::fabs(m.r2 - 0.97) <= kOracleTolerance && std::fabs(m.mae - 0.4 / 3.0) <= kOracleTolerance &&
                    std::fabs(m.mre - static_cast<double>(oracle_mre(y, p))) <= kOracleTolerance &&
                    std::fabs(m.mre - 0.349830) < 5e-7;
    char buf[96];
    std::snprintf(buf, sizeof buf, "R2 %.6f MAE %.6f MRE %.6f", m.r2, m.mae, m.mre);
    out.push_back({"worked example", ok, buf});
    return out;
}

std::vector<Check> run_all(const Options& options) {
    std::vector<Check> out = gradient_checks(options);
    for (Check& c : metric_checks(options)) out.push_back(std::move(c));
    return out;
}

}  // namespace deepoformer::selftest
