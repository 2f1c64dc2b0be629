#include "deepoformer/ops.hpp"

#include "deepoformer/errors.hpp"

#include <cmath>
#include <string>

namespace deepoformer::ad {
namespace {

Tape& same_tape(Var a, Var b) {
    if (&a.tape() != &b.tape()) throw TapeError("operands recorded on different tapes");
    return a.tape();
}

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                     b.shape_string());
}

enum class Broadcast { same, row, scalar };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
    if (a.same_shape(b)) return Broadcast::same;
    if (b.rows() == 1 && b.cols() == 1) return Broadcast::scalar;
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
    shape_mismatch(op, a, b);
}

// Index into b for element (i, j) of a.
inline std::size_t bidx(Broadcast k, std::size_t i, std::size_t j, std::size_t cols) {
    switch (k) {
        case Broadcast::same: return i * cols + j;
        case Broadcast::row: return j;
        case Broadcast::scalar: return 0;
    }
    return 0;
}

template <typename Fwd, typename DA, typename DB>
Var binary(const char* op, Var a, Var b, Fwd fwd, DA da, DB db) {
    Tape& tape = same_tape(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const Broadcast kind = broadcast_kind(op, av, bv);
    const std::size_t m = av.rows(), n = av.cols();
    Tensor out(m, n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out(i, j) = fwd(av(i, j), bv[bidx(kind, i, j, n)]);
    return tape.record(op, std::move(out), {a, b}, [kind, da, db](BackwardContext& ctx) {
        const Tensor& g = ctx.grad_output();
        const Tensor& x = ctx.input(0);
        const Tensor& y = ctx.input(1);
        const std::size_t m = x.rows(), n = x.cols();
        if (Tensor* gx = ctx.input_grad(0)) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    (*gx)(i, j) += g(i, j) * da(x(i, j), y[bidx(kind, i, j, n)]);
        }
        if (Tensor* gy = ctx.input_grad(1)) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    (*gy)[bidx(kind, i, j, n)] += g(i, j) * db(x(i, j), y[bidx(kind, i, j, n)]);
        }
    });
}

template <typename Fwd, typename Deriv>
Var unary(const char* op, Var a, Fwd fwd, Deriv deriv) {
    const Tensor& av = a.value();
    Tensor out(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
    return a.tape().record(op, std::move(out), {a}, [deriv](BackwardContext& ctx) {
        Tensor* gx = ctx.input_grad(0);
        if (!gx) return;
        const Tensor& g = ctx.grad_output();
        const Tensor& x = ctx.input(0);
        const Tensor& y = ctx.output();
        for (std::size_t i = 0; i < x.size(); ++i) (*gx)[i] += g[i] * deriv(x[i], y[i]);
    });
}

}  // namespace

Var matmul(Var a, Var b) {
    Tape& tape = same_tape(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.rows()) shape_mismatch("matmul", av, bv);
    Tensor out(av.rows(), bv.cols());
    kernels::gemm_acc(av, bv, out);
    return tape.record("matmul", std::move(out), {a, b}, [](BackwardContext& ctx) {
        const Tensor& g = ctx.grad_output();
        if (Tensor* ga = ctx.input_grad(0)) kernels::gemm_acc(g, kernels::transpose(ctx.input(1)), *ga);
        if (Tensor* gb = ctx.input_grad(1)) kernels::gemm_tn_acc(ctx.input(0), g, *gb);
    });
}

Var linear(Var x, Var w, Var bias) {
    Tape& tape = same_tape(x, w);
    same_tape(x, bias);
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = bias.value();
    if (xv.cols() != wv.rows()) shape_mismatch("linear", xv, wv);
    if (bv.rows() != 1 || bv.cols() != wv.cols()) shape_mismatch("linear bias", wv, bv);
    Tensor out(xv.rows(), wv.cols());
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = bv[j];
    kernels::gemm_acc(xv, wv, out);
    return tape.record("linear", std::move(out), {x, w, bias}, [](BackwardContext& ctx) {
        const Tensor& g = ctx.grad_output();
        if (Tensor* gx = ctx.input_grad(0)) kernels::gemm_acc(g, kernels::transpose(ctx.input(1)), *gx);
        if (Tensor* gw = ctx.input_grad(1)) kernels::gemm_tn_acc(ctx.input(0), g, *gw);
        if (Tensor* gb = ctx.input_grad(2)) {
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) (*gb)[j] += g(i, j);
        }
    });
}

Var transpose(Var a) {
    return a.tape().record("transpose", kernels::transpose(a.value()), {a}, [](BackwardContext& ctx) {
        Tensor* ga = ctx.input_grad(0);
        if (!ga) return;
        const Tensor& g = ctx.grad_output();
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) (*ga)(j, i) += g(i, j);
    });
}

Var add(Var a, Var b) {
    return binary(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
    return binary(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
    return binary(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Var div(Var a, Var b) {
    return binary(
        "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

Var scale(Var a, double factor) {
    return unary(
        "scale", a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
    return unary(
        "add_scalar", a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var exp(Var a) {
    return unary(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
    return unary(
        "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var pow(Var a, double exponent) {
    return unary(
        "pow", a, [exponent](double x) { return std::pow(x, exponent); },
        [exponent](double x, double) { return exponent * std::pow(x, exponent - 1.0); });
}

Var square(Var a) {
    return unary(
        "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sum(Var a) {
    const Tensor& av = a.value();
    double s = 0.0;
    for (double v : av.data()) s += v;
    return a.tape().record("sum", Tensor::scalar(s), {a}, [](BackwardContext& ctx) {
        Tensor* ga = ctx.input_grad(0);
        if (!ga) return;
        const double g = ctx.grad_output()[0];
        for (double& v : ga->data()) v += g;
    });
}

Var sum(Var a, Axis axis) {
    const Tensor& av = a.value();
    const std::size_t m = av.rows(), n = av.cols();
    Tensor out = axis == Axis::rows ? Tensor(1, n) : Tensor(m, 1);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[axis == Axis::rows ? j : i] += av(i, j);
    return a.tape().record("sum_axis", std::move(out), {a}, [axis](BackwardContext& ctx) {
        Tensor* ga = ctx.input_grad(0);
        if (!ga) return;
        const Tensor& g = ctx.grad_output();
        for (std::size_t i = 0; i < ga->rows(); ++i)
            for (std::size_t j = 0; j < ga->cols(); ++j) (*ga)(i, j) += g[axis == Axis::rows ? j : i];
    });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var mean(Var a, Axis axis) {
    const double n = static_cast<double>(axis == Axis::rows ? a.rows() : a.cols());
    return scale(sum(a, axis), 1.0 / n);
}

Var concat(std::span<const Var> parts, Axis axis) {
    if (parts.empty()) throw ArgumentError("concat of zero tensors");
    Tape& tape = parts.front().tape();
    const Tensor& first = parts.front().value();
    std::size_t total = 0;
    for (const Var& p : parts) {
        same_tape(parts.front(), p);
        const Tensor& v = p.value();
        if (axis == Axis::cols ? v.rows() != first.rows() : v.cols() != first.cols())
            shape_mismatch("concat", first, v);
        total += axis == Axis::cols ? v.cols() : v.rows();
    }
    Tensor out = axis == Axis::cols ? Tensor(first.rows(), total) : Tensor(total, first.cols());
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        for (std::size_t i = 0; i < v.rows(); ++i)
            for (std::size_t j = 0; j < v.cols(); ++j) {
                if (axis == Axis::cols) out(i, offset + j) = v(i, j);
                else out(offset + i, j) = v(i, j);
            }
        offset += axis == Axis::cols ? v.cols() : v.rows();
    }
    return tape.record("concat", std::move(out), parts, [axis, count = parts.size()](BackwardContext& ctx) {
        const Tensor& g = ctx.grad_output();
        std::size_t offset = 0;
        for (std::size_t k = 0; k < count; ++k) {
            const Tensor& v = ctx.input(k);
            if (Tensor* gk = ctx.input_grad(k)) {
                for (std::size_t i = 0; i < v.rows(); ++i)
                    for (std::size_t j = 0; j < v.cols(); ++j)
                        (*gk)(i, j) += axis == Axis::cols ? g(i, offset + j) : g(offset + i, j);
            }
            offset += axis == Axis::cols ? v.cols() : v.rows();
        }
    });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
    const Tensor& av = a.value();
    if (begin >= end || end > av.cols()) {
        throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of bounds for shape " + av.shape_string());
    }
    Tensor out(av.rows(), end - begin);
    for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = av(i, j);
    return a.tape().record("slice_cols", std::move(out), {a}, [begin](BackwardContext& ctx) {
        Tensor* ga = ctx.input_grad(0);
        if (!ga) return;
        const Tensor& g = ctx.grad_output();
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) (*ga)(i, begin + j) += g(i, j);
    });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
    const Tensor& av = a.value();
    if (begin >= end || end > av.rows()) {
        throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of bounds for shape " + av.shape_string());
    }
    const auto first = av.values().begin() + static_cast<std::ptrdiff_t>(begin * av.cols());
    const auto last = av.values().begin() + static_cast<std::ptrdiff_t>(end * av.cols());
    Tensor out(end - begin, av.cols(), std::vector<double>(first, last));
    return a.tape().record("slice_rows", std::move(out), {a}, [begin](BackwardContext& ctx) {
        Tensor* ga = ctx.input_grad(0);
        if (!ga) return;
        const Tensor& g = ctx.grad_output();
        const std::size_t off = begin * g.cols();
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[off + i] += g[i];
    });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
    const Tensor& av = a.value();
    if (rows * cols != av.size()) {
        throw ShapeError("reshape: cannot view " + av.shape_string() + " as [" + std::to_string(rows) +
                         ", " + std::to_string(cols) + "]");
    }
    return a.tape().record("reshape", Tensor(rows, cols, av.values()), {a}, [](BackwardContext& ctx) {
        Tensor* ga = ctx.input_grad(0);
        if (!ga) return;
        const Tensor& g = ctx.grad_output();
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    });
}

Var gather_rows(Var table, std::span<const int> ids) {
    const Tensor& tv = table.value();
    Tensor out(ids.size(), tv.cols());
    for (std::size_t r = 0; r < ids.size(); ++r) {
        const int id = ids[r];
        if (id < 0 || static_cast<std::size_t>(id) >= tv.rows()) {
            throw ArgumentError("gather_rows: id " + std::to_string(id) + " out of range for table with " +
                                std::to_string(tv.rows()) + " rows");
        }
        for (std::size_t j = 0; j < tv.cols(); ++j) out(r, j) = tv(static_cast<std::size_t>(id), j);
    }
    return table.tape().record(
        "gather_rows", std::move(out), {table},
        [ids = std::vector<int>(ids.begin(), ids.end())](BackwardContext& ctx) {
            Tensor* gt = ctx.input_grad(0);
            if (!gt) return;
            const Tensor& g = ctx.grad_output();
            for (std::size_t r = 0; r < ids.size(); ++r)
                for (std::size_t j = 0; j < g.cols(); ++j)
                    (*gt)(static_cast<std::size_t>(ids[r]), j) += g(r, j);
        });
}

}  // namespace deepoformer::ad
