#include "deepoformer/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace deepoformer::ad {
namespace {

constexpr std::size_t kMaxListedFailures = 16;

void compare(GradCheckReport& report, const std::string& label, double analytic, double numeric,
             const GradCheckOptions& opts) {
    const double err = gradient_error(analytic, numeric, opts.abs_floor);
    ++report.checked;
    if (err > report.max_rel_error || report.worst.empty()) {
        report.max_rel_error = err;
        report.worst = label;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
    }
    if (!(err <= opts.rel_tolerance)) {
        report.passed = false;
        if (report.failures.size() < kMaxListedFailures) {
            report.failures.push_back(label + ": analytic " + std::to_string(analytic) + " numeric " +
                                      std::to_string(numeric));
        }
    }
}

}  // namespace

std::vector<std::size_t> sampled_entries(std::size_t size, std::size_t limit) {
    std::vector<std::size_t> idx;
    if (limit == 0 || size <= limit) {
        idx.resize(size);
        for (std::size_t i = 0; i < size; ++i) idx[i] = i;
        return idx;
    }
    if (limit == 1) return {0};
    for (std::size_t j = 0; j < limit; ++j) idx.push_back(j * (size - 1) / (limit - 1));
    return idx;
}

double gradient_error(double analytic, double numeric, double abs_floor) noexcept {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
    return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const InputFunction& f, std::vector<Tensor> inputs, GradCheckOptions opts) {
    GradCheckReport report;
    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(inputs.size());
        for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
        Var out = f(tape, vars);
        tape.backward(out);
        for (Var v : vars) analytic.push_back(tape.grad(v));
        report.min_kink_distance = tape.diagnostics().min_kink_distance;
    }

    auto evaluate = [&](const std::vector<Tensor>& values) {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(values.size());
        for (const Tensor& t : values) vars.push_back(tape.constant(t));
        return f(tape, vars).value().item();
    };

    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t i : sampled_entries(inputs[k].size(), opts.max_entries_per_tensor)) {
            const double orig = inputs[k][i];
            inputs[k][i] = orig + opts.step;
            const double plus = evaluate(inputs);
            inputs[k][i] = orig - opts.step;
            const double minus = evaluate(inputs);
            inputs[k][i] = orig;
            const double numeric = (plus - minus) / (2.0 * opts.step);
            compare(report, "input" + std::to_string(k) + "[" + std::to_string(i) + "]", analytic[k][i], numeric,
                    opts);
        }
    }
    return report;
}

GradCheckReport grad_check(ParameterSet& params, const ParameterFunction& f, GradCheckOptions opts) {
    GradCheckReport report;
    params.zero_grad();
    {
        Tape tape;
        Var out = f(tape);
        tape.backward(out);
        report.min_kink_distance = tape.diagnostics().min_kink_distance;
    }
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.push_back(p->grad);
    params.zero_grad();

    auto evaluate = [&] {
        Tape tape;
        return f(tape).value().item();
    };

    std::size_t k = 0;
    for (auto& p : params) {
        for (std::size_t i : sampled_entries(p->value.size(), opts.max_entries_per_tensor)) {
            const double orig = p->value[i];
            p->value[i] = orig + opts.step;
            const double plus = evaluate();
            p->value[i] = orig - opts.step;
            const double minus = evaluate();
            p->value[i] = orig;
            const double numeric = (plus - minus) / (2.0 * opts.step);
            compare(report, p->name + "[" + std::to_string(i) + "]", analytic[k][i], numeric, opts);
        }
        ++k;
    }
    return report;
}

}  // namespace deepoformer::ad
