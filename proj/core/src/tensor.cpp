#include "deepoformer/tensor.hpp"

#include "deepoformer/errors.hpp"

#include <algorithm>
#include <cmath>

namespace deepoformer::ad {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape [" + std::to_string(rows) + ", " +
                         std::to_string(cols) + "]");
    }
}

Tensor Tensor::row(std::vector<double> values) {
    const auto n = values.size();
    return Tensor(1, n, std::move(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged rows in Tensor::from_rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(r, c, std::move(data));
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string());
    return data_[0];
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
    return "[" + std::to_string(rows_) + ", " + std::to_string(cols_) + "]";
}

namespace kernels {

void gemm_acc(const Tensor& a, const Tensor& b, Tensor& out) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = po + i * n;
        const double* arow = pa + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double s = arow[p];
            const double* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += s * brow[j];
        }
    }
}

void gemm_tn_acc(const Tensor& a, const Tensor& g, Tensor& out) {
    const std::size_t m = a.rows(), k = a.cols(), n = g.cols();
    const double* pa = a.data().data();
    const double* pg = g.data().data();
    double* po = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = pa + i * k;
        const double* grow = pg + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double s = arow[p];
            double* orow = po + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += s * grow[j];
        }
    }
}

Tensor transpose(const Tensor& a) {
    Tensor t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

}  // namespace kernels

}  // namespace deepoformer::ad
