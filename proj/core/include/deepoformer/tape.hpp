#pragma once

#include "deepoformer/tensor.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace deepoformer::ad {

// Trainable tensor owned by a ParameterSet. `grad` accumulates across
// backward passes until zero_grad().
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
};

// Named parameters with stable addresses.
class ParameterSet {
public:
    Parameter& add(std::string name, Tensor init);
    Parameter* find(std::string_view name) noexcept;
    const Parameter* find(std::string_view name) const noexcept;
    Parameter& at(std::string_view name);
    const Parameter& at(std::string_view name) const;

    std::size_t size() const noexcept { return params_.size(); }
    std::size_t scalar_count() const noexcept;
    void zero_grad();

    auto begin() noexcept { return params_.begin(); }
    auto end() noexcept { return params_.end(); }
    auto begin() const noexcept { return params_.cbegin(); }
    auto end() const noexcept { return params_.cend(); }

private:
    std::vector<std::unique_ptr<Parameter>> params_;
};

class Tape;

// Handle to a node on a tape.
class Var {
public:
    Var() = default;

    bool valid() const noexcept { return tape_ != nullptr; }
    std::uint32_t id() const noexcept { return id_; }
    Tape& tape() const noexcept { return *tape_; }
    const Tensor& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }

private:
    friend class Tape;
    Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::uint32_t id_ = 0;
};

class BackwardContext;
using BackwardFn = std::function<void(BackwardContext&)>;

// Counters the ops update while recording; read by checks and tests.
struct TapeDiagnostics {
    bool debug = false;
    // Largest |row sum - 1| seen in any attention probability matrix (debug only).
    double max_attention_row_error = 0.0;
    // Smallest |x| fed to a non-differentiable point (Leaky ReLU kink).
    double min_kink_distance = std::numeric_limits<double>::infinity();
};

// Records operations in execution order so backward() can walk them in
// reverse. One tape per forward pass; it is single-use for backward.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var variable(Tensor value);
    Var parameter(Parameter& param);

    // Appends an op result. `op` must have static storage duration. The
    // backward function is dropped when no input requires a gradient.
    Var record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn backward);
    Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
        return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                      std::move(backward));
    }

    // Reverse sweep from a 1 x 1 output. Parameter gradients are added into
    // Parameter::grad. Throws TapeError when called twice on the same tape.
    void backward(Var output);

    const Tensor& value(Var v) const;
    // Gradient of a node after backward(); zero tensor if none reached it.
    Tensor grad(Var v) const;
    bool requires_grad(Var v) const;

    std::size_t size() const noexcept { return nodes_.size(); }
    bool consumed() const noexcept { return consumed_; }
    TapeDiagnostics& diagnostics() noexcept { return diagnostics_; }
    const TapeDiagnostics& diagnostics() const noexcept { return diagnostics_; }

private:
    friend class BackwardContext;

    struct Node {
        const char* op = "";
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        std::vector<std::uint32_t> inputs;
        BackwardFn backward;
        Parameter* param = nullptr;
    };

    Var push(Node node);
    Node& node(Var v);
    const Node& node(Var v) const;
    Tensor& grad_slot(std::uint32_t id);

    std::deque<Node> nodes_;
    bool consumed_ = false;
    TapeDiagnostics diagnostics_;
};

class BackwardContext {
public:
    const Tensor& grad_output() const { return node_.grad; }
    const Tensor& output() const { return node_.value; }
    const Tensor& input(std::size_t i) const;
    // Accumulation target for input i, or nullptr when it needs no gradient.
    Tensor* input_grad(std::size_t i);

private:
    friend class Tape;
    BackwardContext(Tape& tape, Tape::Node& node) : tape_(tape), node_(node) {}

    Tape& tape_;
    Tape::Node& node_;
};

}  // namespace deepoformer::ad
