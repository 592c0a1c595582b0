#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pdabench/errors.hpp"

namespace pdabench::testsupport {

namespace {

double xlogxm1(double x) {
    return x > 0.0 ? x * (std::log(x) - 1.0) : 0.0;
}

double kl(const std::vector<double>& p, const std::vector<double>& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
        s += q[i] - p[i];
    }
    return s;
}

std::vector<double> row_sums(const Tensor& pi) {
    std::vector<double> r(static_cast<std::size_t>(pi.rows), 0.0);
    for (int i = 0; i < pi.rows; ++i)
        for (int j = 0; j < pi.cols; ++j) r[static_cast<std::size_t>(i)] += pi(i, j);
    return r;
}

std::vector<double> col_sums(const Tensor& pi) {
    std::vector<double> c(static_cast<std::size_t>(pi.cols), 0.0);
    for (int i = 0; i < pi.rows; ++i)
        for (int j = 0; j < pi.cols; ++j) c[static_cast<std::size_t>(j)] += pi(i, j);
    return c;
}

// Solve S x = rhs in place by Gaussian elimination with partial pivoting.
std::vector<double> solve_dense(std::vector<std::vector<double>> s, std::vector<double> rhs) {
    const int n = static_cast<int>(rhs.size());
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(s[r][col]) > std::abs(s[piv][col])) piv = r;
        std::swap(s[piv], s[col]);
        std::swap(rhs[piv], rhs[col]);
        const double d = s[col][col];
        if (std::abs(d) < 1e-14) throw NumericError("oracle: singular projection system");
        for (int r = col + 1; r < n; ++r) {
            const double f = s[r][col] / d;
            if (f == 0.0) continue;
            for (int c = col; c < n; ++c) s[r][c] -= f * s[col][c];
            rhs[r] -= f * rhs[col];
        }
    }
    std::vector<double> x(static_cast<std::size_t>(n));
    for (int r = n - 1; r >= 0; --r) {
        double acc = rhs[static_cast<std::size_t>(r)];
        for (int c = r + 1; c < n; ++c) acc -= s[r][c] * x[static_cast<std::size_t>(c)];
        x[static_cast<std::size_t>(r)] = acc / s[r][r];
    }
    return x;
}

} // namespace

double entropic_objective(const Tensor& C, const Tensor& pi, double eps) {
    double s = 0.0;
    for (int i = 0; i < pi.size(); ++i)
        s += C.data[static_cast<std::size_t>(i)] * pi.data[static_cast<std::size_t>(i)] +
             eps * xlogxm1(pi.data[static_cast<std::size_t>(i)]);
    return s;
}

double uot_objective(const Tensor& C, const Tensor& pi, const std::vector<double>& a,
                     const std::vector<double>& b, double tau, double eta3) {
    double s = 0.0;
    for (int i = 0; i < pi.size(); ++i)
        s += C.data[static_cast<std::size_t>(i)] * pi.data[static_cast<std::size_t>(i)] +
             tau * xlogxm1(pi.data[static_cast<std::size_t>(i)]);
    return s + eta3 * (kl(row_sums(pi), a) + kl(col_sums(pi), b));
}

Tensor balanced_convex_oracle(const Tensor& C, const std::vector<double>& a,
                              const std::vector<double>& b, double eps, double grad_tol,
                              int max_iter) {
    const int n = C.rows;
    const int m = C.cols;
    if (n * m > 25) throw ConfigError("balanced_convex_oracle: instance too large");

    // Drop the last column constraint; with sum(a) == sum(b) it is redundant.
    const int nc = n + m - 1;
    auto constraint_dot = [&](const Tensor& x) {
        std::vector<double> out(static_cast<std::size_t>(nc), 0.0);
        auto r = row_sums(x);
        auto c = col_sums(x);
        for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = r[static_cast<std::size_t>(i)];
        for (int j = 0; j + 1 < m; ++j) out[static_cast<std::size_t>(n + j)] = c[static_cast<std::size_t>(j)];
        return out;
    };

    // Gram matrix of the constraint rows.
    std::vector<std::vector<double>> gram(static_cast<std::size_t>(nc),
                                          std::vector<double>(static_cast<std::size_t>(nc), 0.0));
    for (int i = 0; i < n; ++i) gram[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = m;
    for (int j = 0; j + 1 < m; ++j)
        gram[static_cast<std::size_t>(n + j)][static_cast<std::size_t>(n + j)] = n;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j + 1 < m; ++j) {
            gram[static_cast<std::size_t>(i)][static_cast<std::size_t>(n + j)] = 1.0;
            gram[static_cast<std::size_t>(n + j)][static_cast<std::size_t>(i)] = 1.0;
        }

    // Project a matrix-shaped direction onto the null space of the constraints.
    auto project_null = [&](Tensor g) {
        auto viol = constraint_dot(g);
        auto lambda = solve_dense(gram, viol);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) {
                double corr = lambda[static_cast<std::size_t>(i)];
                if (j + 1 < m) corr += lambda[static_cast<std::size_t>(n + j)];
                g(i, j) -= corr;
            }
        return g;
    };

    double mass = 0.0;
    for (double v : a) mass += v;

    Tensor pi(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            pi(i, j) = a[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(j)] / mass;

    double obj = entropic_objective(C, pi, eps);
    double step = 1.0;
    for (int it = 0; it < max_iter; ++it) {
        Tensor grad(n, m);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) grad(i, j) = C(i, j) + eps * std::log(pi(i, j));
        Tensor dir = project_null(grad);
        const double dnorm = max_abs(dir);
        if (dnorm < grad_tol) break;

        double d2 = 0.0;
        for (double v : dir.data) d2 += v * v;

        bool accepted = false;
        for (int bt = 0; bt < 200 && !accepted; ++bt) {
            Tensor cand = pi;
            bool positive = true;
            for (int k = 0; k < cand.size(); ++k) {
                cand.data[static_cast<std::size_t>(k)] -= step * dir.data[static_cast<std::size_t>(k)];
                if (cand.data[static_cast<std::size_t>(k)] <= 0.0) positive = false;
            }
            const double cand_obj =
                positive ? entropic_objective(C, cand, eps) : std::numeric_limits<double>::infinity();
            if (cand_obj <= obj - 1e-4 * step * d2) {
                pi = std::move(cand);
                obj = cand_obj;
                accepted = true;
                step *= 2.0; // let the step grow back after cautious phases
            } else {
                step *= 0.5;
            }
        }
        if (!accepted) break; // step underflow: numerically stationary
    }
    return pi;
}

Tensor uot_convex_oracle(const Tensor& C, const std::vector<double>& a,
                         const std::vector<double>& b, double tau, double eta3,
                         double grad_tol, int max_iter) {
    const int n = C.rows;
    const int m = C.cols;
    if (n * m > 25) throw ConfigError("uot_convex_oracle: instance too large");

    Tensor pi(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) pi(i, j) = a[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(j)];

    double obj = uot_objective(C, pi, a, b, tau, eta3);
    double step = 1.0;
    for (int it = 0; it < max_iter; ++it) {
        auto r = row_sums(pi);
        auto c = col_sums(pi);
        Tensor grad(n, m);
        double gnorm = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) {
                grad(i, j) = C(i, j) + tau * std::log(pi(i, j)) +
                             eta3 * (std::log(r[static_cast<std::size_t>(i)] / a[static_cast<std::size_t>(i)]) +
                                     std::log(c[static_cast<std::size_t>(j)] / b[static_cast<std::size_t>(j)]));
                gnorm = std::max(gnorm, std::abs(grad(i, j)));
            }
        if (gnorm < grad_tol) break;

        double d2 = 0.0;
        for (double v : grad.data) d2 += v * v;

        bool accepted = false;
        for (int bt = 0; bt < 200 && !accepted; ++bt) {
            Tensor cand = pi;
            bool positive = true;
            for (int k = 0; k < cand.size(); ++k) {
                cand.data[static_cast<std::size_t>(k)] -= step * grad.data[static_cast<std::size_t>(k)];
                if (cand.data[static_cast<std::size_t>(k)] <= 0.0) positive = false;
            }
            const double cand_obj =
                positive ? uot_objective(C, cand, a, b, tau, eta3) : std::numeric_limits<double>::infinity();
            if (cand_obj <= obj - 1e-4 * step * d2) {
                pi = std::move(cand);
                obj = cand_obj;
                accepted = true;
                step *= 2.0;
            } else {
                step *= 0.5;
            }
        }
        if (!accepted) break;
    }
    return pi;
}

} // namespace pdabench::testsupport
