#pragma once

#include "deepoformer/tape.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace deepoformer::ad {

struct GradCheckOptions {
    double step = 1e-5;
    double rel_tolerance = 1e-4;
    // Denominator floor for the relative error, so that tiny gradients are
    // compared absolutely.
    double abs_floor = 1e-8;
    // When nonzero, at most this many evenly strided entries of each tensor
    // are perturbed (always including the first and last).
    std::size_t max_entries_per_tensor = 0;
};

// Indices of `size` entries that a check with `limit` per tensor visits.
std::vector<std::size_t> sampled_entries(std::size_t size, std::size_t limit);

struct GradCheckReport {
    bool passed = true;
    std::size_t checked = 0;
    double max_rel_error = 0.0;
    std::string worst;  // "<tensor>[i]" with the largest error
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::vector<std::string> failures;
    // Closest approach of any recorded value to a non-differentiable point
    // during the unperturbed pass.
    double min_kink_distance = 0.0;
};

// error = |analytic - numeric| / max(|analytic|, |numeric|, abs_floor)
double gradient_error(double analytic, double numeric, double abs_floor) noexcept;

using InputFunction = std::function<Var(Tape&, std::span<const Var>)>;
using ParameterFunction = std::function<Var(Tape&)>;

// Reverse-mode gradient of f w.r.t. each input element vs central
// differences. f must return a 1 x 1 Var.
GradCheckReport grad_check(const InputFunction& f, std::vector<Tensor> inputs, GradCheckOptions opts = {});

// Same check over every element of every parameter in `params`; f records
// the parameters on the tape it is handed. Parameter values are restored and
// gradients zeroed on return.
GradCheckReport grad_check(ParameterSet& params, const ParameterFunction& f, GradCheckOptions opts = {});

}  // namespace deepoformer::ad
