#include "pdabench/ot.hpp"

#include <algorithm>
#include <cmath>

#include "pdabench/errors.hpp"

namespace pdabench {

namespace {

void check_masses(const Tensor& C, const std::vector<double>& a, const std::vector<double>& b) {
    if (static_cast<int>(a.size()) != C.rows || static_cast<int>(b.size()) != C.cols)
        throw ConfigError("sinkhorn: mass vectors do not match the cost matrix");
    for (double v : a)
        if (!(v > 0.0)) throw ConfigError("sinkhorn: source masses must be positive");
    for (double v : b)
        if (!(v > 0.0)) throw ConfigError("sinkhorn: target masses must be positive");
    if (!C.all_finite()) throw NumericError("sinkhorn: non-finite cost matrix");
}

double lse(const double* x, int n) {
    double m = x[0];
    for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::exp(x[i] - m);
    return m + std::log(s);
}

} // namespace

std::vector<double> TransportPlan::row_marginals() const {
    std::vector<double> r(static_cast<std::size_t>(pi.rows), 0.0);
    for (int i = 0; i < pi.rows; ++i)
        for (int j = 0; j < pi.cols; ++j) r[static_cast<std::size_t>(i)] += pi(i, j);
    return r;
}

std::vector<double> TransportPlan::col_marginals() const {
    std::vector<double> c(static_cast<std::size_t>(pi.cols), 0.0);
    for (int i = 0; i < pi.rows; ++i)
        for (int j = 0; j < pi.cols; ++j) c[static_cast<std::size_t>(j)] += pi(i, j);
    return c;
}

double TransportPlan::marginal_violation() const {
    const auto r = row_marginals();
    const auto c = col_marginals();
    double v = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) v = std::max(v, std::abs(r[i] - a[i]));
    for (std::size_t j = 0; j < b.size(); ++j) v = std::max(v, std::abs(c[j] - b[j]));
    return v;
}

TransportPlan sinkhorn(const Tensor& C, const std::vector<double>& a,
                       const std::vector<double>& b, double eps, int max_iter, double tol,
                       std::vector<double>* dual_trace) {
    check_masses(C, a, b);
    if (eps <= 0.0) throw ConfigError("sinkhorn: eps must be positive");
    double sa = 0.0, sb = 0.0;
    for (double v : a) sa += v;
    for (double v : b) sb += v;
    if (std::abs(sa - sb) > 1e-9 * std::max(1.0, sa))
        throw ConfigError("sinkhorn: total masses differ");

    const int n = C.rows;
    const int m = C.cols;
    // scaled potentials: phi = f/eps, psi = g/eps against logK = -C/eps
    std::vector<double> phi(static_cast<std::size_t>(n), 0.0);
    std::vector<double> psi(static_cast<std::size_t>(m), 0.0);
    std::vector<double> log_a(static_cast<std::size_t>(n));
    std::vector<double> log_b(static_cast<std::size_t>(m));
    for (int i = 0; i < n; ++i) log_a[static_cast<std::size_t>(i)] = std::log(a[static_cast<std::size_t>(i)]);
    for (int j = 0; j < m; ++j) log_b[static_cast<std::size_t>(j)] = std::log(b[static_cast<std::size_t>(j)]);

    std::vector<double> logk(static_cast<std::size_t>(n) * m);
    std::vector<double> logk_t(static_cast<std::size_t>(n) * m); // transposed copy
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
            const double v = -C(i, j) / eps;
            logk[static_cast<std::size_t>(i) * m + j] = v;
            logk_t[static_cast<std::size_t>(j) * n + i] = v;
        }

    std::vector<double> buf(static_cast<std::size_t>(std::max(n, m)), 0.0);

    TransportPlan plan;
    plan.a = a;
    plan.b = b;
    plan.pi = Tensor(n, m);

    auto fill_plan = [&]() {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j)
                plan.pi(i, j) = std::exp(phi[static_cast<std::size_t>(i)] +
                                         psi[static_cast<std::size_t>(j)] +
                                         logk[static_cast<std::size_t>(i) * m + j]);
    };

    int it = 0;
    for (; it < max_iter; ++it) {
        // phi-update (exact block ascent of the dual)
        for (int i = 0; i < n; ++i) {
            const double* row = logk.data() + static_cast<std::size_t>(i) * m;
            for (int j = 0; j < m; ++j)
                buf[static_cast<std::size_t>(j)] = psi[static_cast<std::size_t>(j)] + row[j];
            phi[static_cast<std::size_t>(i)] = log_a[static_cast<std::size_t>(i)] - lse(buf.data(), m);
        }
        // psi-update
        for (int j = 0; j < m; ++j) {
            const double* col = logk_t.data() + static_cast<std::size_t>(j) * n;
            for (int i = 0; i < n; ++i)
                buf[static_cast<std::size_t>(i)] = phi[static_cast<std::size_t>(i)] + col[i];
            psi[static_cast<std::size_t>(j)] = log_b[static_cast<std::size_t>(j)] - lse(buf.data(), n);
        }

        if (dual_trace) {
            double dual = 0.0;
            for (int i = 0; i < n; ++i)
                dual += eps * phi[static_cast<std::size_t>(i)] * a[static_cast<std::size_t>(i)];
            for (int j = 0; j < m; ++j)
                dual += eps * psi[static_cast<std::size_t>(j)] * b[static_cast<std::size_t>(j)];
            double ent = 0.0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j)
                    ent += std::exp(phi[static_cast<std::size_t>(i)] +
                                    psi[static_cast<std::size_t>(j)] +
                                    logk[static_cast<std::size_t>(i) * m + j]);
            dual_trace->push_back(dual - eps * ent);
        }

        // after the psi-update column marginals are exact; convergence is the
        // row-marginal violation (checked with a cheap row-sum pass, not at
        // every iteration)
        if (it % 4 == 3 || it + 1 == max_iter || dual_trace) {
            fill_plan();
            if (plan.marginal_violation() <= tol) {
                plan.converged = true;
                ++it;
                break;
            }
        }
    }
    plan.iterations_used = it;
    if (!plan.converged) fill_plan();
    if (!plan.pi.all_finite()) throw NumericError("sinkhorn: non-finite plan");
    plan.transported_mass = 0.0;
    for (double v : plan.pi.data) plan.transported_mass += v;
    return plan;
}

TransportPlan sinkhorn_uot(const Tensor& C, const std::vector<double>& a,
                           const std::vector<double>& b, double tau, double eta3,
                           int max_iter, double tol, std::vector<double>* dual_trace) {
    check_masses(C, a, b);
    if (tau <= 0.0 || eta3 <= 0.0) throw ConfigError("sinkhorn_uot: tau and eta3 must be positive");

    const int n = C.rows;
    const int m = C.cols;
    const double fi = eta3 / (eta3 + tau);
    std::vector<double> lu(static_cast<std::size_t>(n), 0.0); // log u
    std::vector<double> lv(static_cast<std::size_t>(m), 0.0); // log v
    std::vector<double> log_a(static_cast<std::size_t>(n));
    std::vector<double> log_b(static_cast<std::size_t>(m));
    for (int i = 0; i < n; ++i) log_a[static_cast<std::size_t>(i)] = std::log(a[static_cast<std::size_t>(i)]);
    for (int j = 0; j < m; ++j) log_b[static_cast<std::size_t>(j)] = std::log(b[static_cast<std::size_t>(j)]);

    std::vector<double> logk(static_cast<std::size_t>(n) * m);
    std::vector<double> logk_t(static_cast<std::size_t>(n) * m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
            const double v = -C(i, j) / tau;
            logk[static_cast<std::size_t>(i) * m + j] = v;
            logk_t[static_cast<std::size_t>(j) * n + i] = v;
        }

    std::vector<double> buf(static_cast<std::size_t>(std::max(n, m)), 0.0);

    TransportPlan plan;
    plan.a = a;
    plan.b = b;
    plan.pi = Tensor(n, m);

    auto fill_plan = [&]() {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j)
                plan.pi(i, j) = std::exp(lu[static_cast<std::size_t>(i)] +
                                         lv[static_cast<std::size_t>(j)] +
                                         logk[static_cast<std::size_t>(i) * m + j]);
    };

    int it = 0;
    for (; it < max_iter; ++it) {
        double delta = 0.0;
        for (int i = 0; i < n; ++i) {
            const double* row = logk.data() + static_cast<std::size_t>(i) * m;
            for (int j = 0; j < m; ++j)
                buf[static_cast<std::size_t>(j)] = lv[static_cast<std::size_t>(j)] + row[j];
            const double nu = fi * (log_a[static_cast<std::size_t>(i)] - lse(buf.data(), m));
            delta = std::max(delta, std::abs(nu - lu[static_cast<std::size_t>(i)]));
            lu[static_cast<std::size_t>(i)] = nu;
        }
        for (int j = 0; j < m; ++j) {
            const double* col = logk_t.data() + static_cast<std::size_t>(j) * n;
            for (int i = 0; i < n; ++i)
                buf[static_cast<std::size_t>(i)] = lu[static_cast<std::size_t>(i)] + col[i];
            const double nv = fi * (log_b[static_cast<std::size_t>(j)] - lse(buf.data(), n));
            delta = std::max(delta, std::abs(nv - lv[static_cast<std::size_t>(j)]));
            lv[static_cast<std::size_t>(j)] = nv;
        }

        if (dual_trace) {
            // Dual of the KL-penalised problem in (f, g) = (tau*lu, tau*lv).
            double dual = 0.0;
            for (int i = 0; i < n; ++i)
                dual -= eta3 * a[static_cast<std::size_t>(i)] *
                        (std::exp(-tau * lu[static_cast<std::size_t>(i)] / eta3) - 1.0);
            for (int j = 0; j < m; ++j)
                dual -= eta3 * b[static_cast<std::size_t>(j)] *
                        (std::exp(-tau * lv[static_cast<std::size_t>(j)] / eta3) - 1.0);
            double ent = 0.0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j)
                    ent += std::exp(lu[static_cast<std::size_t>(i)] +
                                    lv[static_cast<std::size_t>(j)] +
                                    logk[static_cast<std::size_t>(i) * m + j]);
            dual_trace->push_back(dual - tau * ent);
        }

        if (delta <= tol) {
            plan.converged = true;
            ++it;
            break;
        }
    }
    plan.iterations_used = it;
    fill_plan();
    if (!plan.pi.all_finite()) throw NumericError("sinkhorn_uot: non-finite plan");
    plan.transported_mass = 0.0;
    for (double v : plan.pi.data) plan.transported_mass += v;
    return plan;
}

TransportPlan partial_ot_entropic(const Tensor& C, const std::vector<double>& a,
                                  const std::vector<double>& b, double mass_fraction,
                                  double eps, int max_iter, double tol) {
    check_masses(C, a, b);
    if (!(mass_fraction > 0.0 && mass_fraction <= 1.0))
        throw ConfigError("partial_ot_entropic: mass fraction must be in (0, 1]");
    double sa = 0.0, sb = 0.0;
    for (double v : a) sa += v;
    for (double v : b) sb += v;
    if (std::abs(sa - 1.0) > 1e-9 || std::abs(sb - 1.0) > 1e-9)
        throw ConfigError("partial_ot_entropic: masses must each sum to 1");

    const int n = C.rows;
    const int m = C.cols;
    const double slack = 1.0 - mass_fraction;

    if (slack == 0.0) {
        // m = 1 degenerates to the balanced problem.
        TransportPlan full = sinkhorn(C, a, b, eps, max_iter, tol);
        return full;
    }

    Tensor caug(n + 1, m + 1);
    double cmax = 0.0;
    for (double v : C.data) cmax = std::max(cmax, std::abs(v));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) caug(i, j) = C(i, j);
    // zero cost to the dummies; the dummy-dummy corner must never be used
    for (int i = 0; i < n; ++i) caug(i, m) = 0.0;
    for (int j = 0; j < m; ++j) caug(n, j) = 0.0;
    caug(n, m) = 2.0 * cmax + 1.0;

    std::vector<double> aaug = a;
    std::vector<double> baug = b;
    aaug.push_back(slack);
    baug.push_back(slack);

    TransportPlan inner = sinkhorn(caug, aaug, baug, eps, max_iter, tol);

    TransportPlan plan;
    plan.a = a;
    plan.b = b;
    plan.converged = inner.converged;
    plan.iterations_used = inner.iterations_used;
    plan.pi = Tensor(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) plan.pi(i, j) = inner.pi(i, j);
    plan.transported_mass = 0.0;
    for (double v : plan.pi.data) plan.transported_mass += v;
    return plan;
}

} // namespace pdabench
