#pragma once

#include "deepoformer/tape.hpp"

#include <cstdint>
#include <vector>

namespace deepoformer::ad {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moments per parameter plus the step counter.
class AdamState {
public:
    explicit AdamState(const ParameterSet& params, AdamConfig config = {});

    const AdamConfig& config() const noexcept { return config_; }
    std::int64_t step_count() const noexcept { return t_; }
    const Tensor& first_moment(std::size_t i) const { return m_.at(i); }
    const Tensor& second_moment(std::size_t i) const { return v_.at(i); }

private:
    friend void adam_step(ParameterSet& params, AdamState& state);

    AdamConfig config_;
    std::int64_t t_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

// One bias-corrected Adam update using Parameter::grad of every parameter.
// Throws ShapeError when the parameter set no longer matches the state.
void adam_step(ParameterSet& params, AdamState& state);

}  // namespace deepoformer::ad
