#include "pdabench/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "pdabench/errors.hpp"

namespace pdabench {

Tensor Tensor::full(int r, int c, double v) {
    Tensor t(r, c);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

Tensor Tensor::scalar(double v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const int r = static_cast<int>(rows.size());
    const int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
    Tensor t(r, c);
    int i = 0;
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != c)
            throw ConfigError("from_rows: ragged initializer");
        int j = 0;
        for (double v : row) t(i, j++) = v;
        ++i;
    }
    return t;
}

Tensor Tensor::column(const std::vector<double>& v) {
    Tensor t(static_cast<int>(v.size()), 1);
    t.data = v;
    return t;
}

Tensor Tensor::row(const std::vector<double>& v) {
    Tensor t(1, static_cast<int>(v.size()));
    t.data = v;
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::item() const {
    if (rows != 1 || cols != 1) throw UsageError("item() on non-scalar tensor");
    return data[0];
}

void gemm_acc(Tensor& c, const Tensor& a, const Tensor& b, Gemm mode) {
    int m, k, n, kb;
    switch (mode) {
        case Gemm::NN: m = a.rows; k = a.cols; n = b.cols; kb = b.rows; break;
        case Gemm::NT: m = a.rows; k = a.cols; n = b.rows; kb = b.cols; break;
        case Gemm::TN: m = a.cols; k = a.rows; n = b.cols; kb = b.rows; break;
        default: throw UsageError("gemm_acc: bad mode");
    }
    if (k != kb || c.rows != m || c.cols != n)
        throw ConfigError("gemm_acc: shape mismatch");

    const double* pa = a.data.data();
    const double* pb = b.data.data();
    double* pc = c.data.data();

    if (mode == Gemm::NN) {
        // ikj: inner loop streams a row of B into a row of C.
        for (int i = 0; i < m; ++i)
            for (int kk = 0; kk < k; ++kk) {
                const double av = pa[static_cast<std::size_t>(i) * k + kk];
                const double* brow = pb + static_cast<std::size_t>(kk) * n;
                double* crow = pc + static_cast<std::size_t>(i) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
    } else if (mode == Gemm::NT) {
        // row-dot-row, both contiguous.
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                const double* ra = pa + static_cast<std::size_t>(i) * k;
                const double* rb = pb + static_cast<std::size_t>(j) * k;
                double s = 0.0;
                for (int kk = 0; kk < k; ++kk) s += ra[kk] * rb[kk];
                pc[static_cast<std::size_t>(i) * n + j] += s;
            }
    } else { // TN: C_ij += sum_k A_ki B_kj, rank-1 updates over k.
        for (int kk = 0; kk < k; ++kk) {
            const double* ra = pa + static_cast<std::size_t>(kk) * m;
            const double* rb = pb + static_cast<std::size_t>(kk) * n;
            for (int i = 0; i < m; ++i) {
                const double av = ra[i];
                double* crow = pc + static_cast<std::size_t>(i) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * rb[j];
            }
        }
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    Tensor c(a.rows, b.cols);
    gemm_acc(c, a, b, Gemm::NN);
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    Tensor c(a.rows, b.rows);
    gemm_acc(c, a, b, Gemm::NT);
    return c;
}

double max_abs(const Tensor& a) {
    double m = 0.0;
    for (double v : a.data) m = std::max(m, std::abs(v));
    return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ConfigError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

} // namespace pdabench
