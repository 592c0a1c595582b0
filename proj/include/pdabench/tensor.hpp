#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace pdabench {

// Dense row-major matrix of doubles. Scalars are 1x1, column vectors n x 1,
// row vectors 1 x n.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    static Tensor zeros(int r, int c) { return Tensor(r, c); }
    static Tensor full(int r, int c, double v);
    static Tensor scalar(double v);
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor column(const std::vector<double>& v);
    static Tensor row(const std::vector<double>& v);

    double& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }

    int size() const { return rows * cols; }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    bool all_finite() const;
    double item() const; // requires 1x1
};

enum class Gemm { NN, NT, TN };

// C += op(A) * op(B); shapes checked.
void gemm_acc(Tensor& c, const Tensor& a, const Tensor& b, Gemm mode);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);

double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

} // namespace pdabench
