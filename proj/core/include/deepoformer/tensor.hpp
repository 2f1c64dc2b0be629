#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace deepoformer::ad {

// Dense row-major matrix of doubles. Vectors are 1 x n, scalars 1 x 1.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Tensor scalar(double value) { return Tensor(1, 1, value); }
    static Tensor row(std::vector<double> values);
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::vector<std::size_t> shape() const { return {rows_, cols_}; }
    bool same_shape(const Tensor& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double item() const;

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row_span(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    const std::vector<double>& values() const noexcept { return data_; }

    void fill(double value);
    bool all_finite() const noexcept;
    std::string shape_string() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Row-major kernels used by the tape ops. Each output row depends only on the
// matching input row, so results do not change with batch composition.
namespace kernels {

// out (m x n) += a (m x k) * b (k x n)
void gemm_acc(const Tensor& a, const Tensor& b, Tensor& out);
// out (k x n) += a^T * g, with a (m x k), g (m x n)
void gemm_tn_acc(const Tensor& a, const Tensor& g, Tensor& out);
Tensor transpose(const Tensor& a);

}  // namespace kernels

}  // namespace deepoformer::ad
