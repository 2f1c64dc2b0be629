#include "deepoformer/adam.hpp"

#include "deepoformer/errors.hpp"

#include <cmath>

namespace deepoformer::ad {

AdamState::AdamState(const ParameterSet& params, AdamConfig config) : config_(config) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
        m_.emplace_back(p->value.rows(), p->value.cols());
        v_.emplace_back(p->value.rows(), p->value.cols());
    }
}

void adam_step(ParameterSet& params, AdamState& state) {
    if (params.size() != state.m_.size()) {
        throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but state tracks " +
                         std::to_string(state.m_.size()));
    }
    const AdamConfig& c = state.config_;
    state.t_ += 1;
    const double t = static_cast<double>(state.t_);
    const double bias1 = 1.0 - std::pow(c.beta1, t);
    const double bias2 = 1.0 - std::pow(c.beta2, t);

    std::size_t k = 0;
    for (auto& p : params) {
        Tensor& m = state.m_[k];
        Tensor& v = state.v_[k];
        ++k;
        if (!p->value.same_shape(m) || !p->grad.same_shape(m)) {
            throw ShapeError("adam_step: parameter '" + p->name + "' has shape " + p->value.shape_string() +
                             ", grad " + p->grad.shape_string() + ", state " + m.shape_string());
        }
        auto theta = p->value.data();
        auto g = p->grad.data();
        auto md = m.data();
        auto vd = v.data();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            md[i] = c.beta1 * md[i] + (1.0 - c.beta1) * g[i];
            vd[i] = c.beta2 * vd[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double m_hat = md[i] / bias1;
            const double v_hat = vd[i] / bias2;
            theta[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
        }
    }
}

}  // namespace deepoformer::ad
