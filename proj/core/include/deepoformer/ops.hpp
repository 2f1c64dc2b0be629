#pragma once

#include "deepoformer/tape.hpp"

#include <span>
#include <vector>

// Differentiable primitives over Var. Inputs must live on the same tape;
// shape errors name both operand shapes.
namespace deepoformer::ad {

enum class Axis { rows, cols };

Var matmul(Var a, Var b);
Var transpose(Var a);

// Elementwise. `add`/`sub`/`mul`/`div` accept an identical shape, a 1 x n
// row (broadcast over rows) or a 1 x 1 scalar as the second operand.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var exp(Var a);
Var log(Var a);
Var pow(Var a, double exponent);
Var square(Var a);

// Reductions. sum(a) is 1 x 1; Axis::rows collapses rows (-> 1 x n),
// Axis::cols collapses columns (-> m x 1).
Var sum(Var a);
Var sum(Var a, Axis axis);
Var mean(Var a);
Var mean(Var a, Axis axis);

Var concat(std::span<const Var> parts, Axis axis);
inline Var concat(std::initializer_list<Var> parts, Axis axis) {
    return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}
// Columns [begin, end) of every row.
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var reshape(Var a, std::size_t rows, std::size_t cols);

// Row gather. Gradients scatter back to the looked-up rows only.
Var gather_rows(Var table, std::span<const int> ids);

// x * w + bias, bias a 1 x n row.
Var linear(Var x, Var w, Var bias);

}  // namespace deepoformer::ad
