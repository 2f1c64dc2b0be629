#include "deepoformer/tape.hpp"

#include "deepoformer/errors.hpp"

#include <algorithm>

namespace deepoformer::ad {

Parameter& ParameterSet::add(std::string name, Tensor init) {
    if (find(name) != nullptr) throw ArgumentError("duplicate parameter name '" + name + "'");
    auto p = std::make_unique<Parameter>();
    p->name = std::move(name);
    p->grad = Tensor(init.rows(), init.cols());
    p->value = std::move(init);
    params_.push_back(std::move(p));
    return *params_.back();
}

Parameter* ParameterSet::find(std::string_view name) noexcept {
    for (auto& p : params_)
        if (p->name == name) return p.get();
    return nullptr;
}

const Parameter* ParameterSet::find(std::string_view name) const noexcept {
    for (const auto& p : params_)
        if (p->name == name) return p.get();
    return nullptr;
}

Parameter& ParameterSet::at(std::string_view name) {
    if (auto* p = find(name)) return *p;
    throw ArgumentError("unknown parameter '" + std::string(name) + "'");
}

const Parameter& ParameterSet::at(std::string_view name) const {
    if (const auto* p = find(name)) return *p;
    throw ArgumentError("unknown parameter '" + std::string(name) + "'");
}

std::size_t ParameterSet::scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& p : params_) p->grad.fill(0.0);
}

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::push(Node n) {
    if (consumed_) throw TapeError("cannot record on a tape after backward()");
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Tape::Node& Tape::node(Var v) {
    if (v.tape_ != this || v.id_ >= nodes_.size()) throw TapeError("variable does not belong to this tape");
    return nodes_[v.id_];
}

const Tape::Node& Tape::node(Var v) const {
    if (v.tape_ != this || v.id_ >= nodes_.size()) throw TapeError("variable does not belong to this tape");
    return nodes_[v.id_];
}

Var Tape::constant(Tensor value) {
    Node n;
    n.op = "constant";
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::variable(Tensor value) {
    Node n;
    n.op = "variable";
    n.value = std::move(value);
    n.requires_grad = true;
    return push(std::move(n));
}

Var Tape::parameter(Parameter& param) {
    Node n;
    n.op = "parameter";
    n.value = param.value;
    n.requires_grad = true;
    n.param = &param;
    return push(std::move(n));
}

Var Tape::record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn backward) {
    if (!value.all_finite()) {
        throw NumericError(std::string("non-finite value produced by op '") + op + "'");
    }
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.inputs.reserve(inputs.size());
    for (const Var& in : inputs) {
        const Node& src = node(in);
        n.requires_grad = n.requires_grad || src.requires_grad;
        n.inputs.push_back(in.id_);
    }
    if (n.requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

Tensor Tape::grad(Var v) const {
    const Node& n = node(v);
    if (n.has_grad) return n.grad;
    return Tensor(n.value.rows(), n.value.cols());
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor& Tape::grad_slot(std::uint32_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
        n.grad = Tensor(n.value.rows(), n.value.cols());
        n.has_grad = true;
    }
    return n.grad;
}

void Tape::backward(Var output) {
    if (consumed_) throw TapeError("backward() called twice on the same tape; run a new forward pass");
    Node& out = node(output);
    if (out.value.size() != 1) {
        throw ArgumentError("backward() needs a scalar output, got shape " + out.value.shape_string());
    }
    consumed_ = true;
    if (!out.requires_grad) return;
    grad_slot(output.id_).fill(1.0);

    for (std::uint32_t id = output.id_ + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.has_grad) continue;
        if (n.backward) {
            BackwardContext ctx(*this, n);
            n.backward(ctx);
        } else if (n.param != nullptr) {
            auto dst = n.param->grad.data();
            auto src = n.grad.data();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
    }
}

const Tensor& BackwardContext::input(std::size_t i) const {
    return tape_.nodes_[node_.inputs.at(i)].value;
}

Tensor* BackwardContext::input_grad(std::size_t i) {
    const std::uint32_t id = node_.inputs.at(i);
    if (!tape_.nodes_[id].requires_grad) return nullptr;
    return &tape_.grad_slot(id);
}

}  // namespace deepoformer::ad
