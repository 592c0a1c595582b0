#pragma once

#include <vector>

#include "pdabench/numerics.hpp"
#include "pdabench/tensor.hpp"

namespace pdabench {

struct TransportPlan {
    Tensor pi;             // n x m, nonnegative
    std::vector<double> a; // source masses
    std::vector<double> b; // target masses
    double transported_mass = 0.0;
    bool converged = false;
    int iterations_used = 0;

    std::vector<double> row_marginals() const;
    std::vector<double> col_marginals() const;
    double marginal_violation() const; // L-inf against (a, b)
};

// Balanced entropic transport, log-domain scaling updates with max-stabilised
// log-sum-exp. Requires a, b > 0 and sum(a) == sum(b); stops when the plan's
// marginal violation is below tol. If dual_trace is given, the dual objective
// is appended once per iteration (it is non-decreasing under exact block
// ascent, which is what the updates implement).
TransportPlan sinkhorn(const Tensor& C, const std::vector<double>& a,
                       const std::vector<double>& b, double eps,
                       int max_iter = Numerics::sinkhorn_max_iter,
                       double tol = Numerics::sinkhorn_tol,
                       std::vector<double>* dual_trace = nullptr);

// Unbalanced entropic transport with KL marginal penalties:
//   min <C,pi> + tau * sum pi (log pi - 1) + eta3 * [KL(pi 1||a) + KL(pi^T 1||b)]
// Scaling updates use the exponent eta3 / (eta3 + tau); convergence is
// measured by the change of the log-scalings.
TransportPlan sinkhorn_uot(const Tensor& C, const std::vector<double>& a,
                           const std::vector<double>& b, double tau, double eta3,
                           int max_iter = Numerics::sinkhorn_max_iter,
                           double tol = Numerics::sinkhorn_tol,
                           std::vector<double>* dual_trace = nullptr);

// Entropic partial transport moving exactly mass_fraction of the (unit) total
// mass: one dummy row/column with zero cost absorbs the slack, the
// dummy-dummy corner is priced at 2*max(C)+1, then the plan is cropped.
TransportPlan partial_ot_entropic(const Tensor& C, const std::vector<double>& a,
                                  const std::vector<double>& b, double mass_fraction,
                                  double eps, int max_iter = Numerics::sinkhorn_max_iter,
                                  double tol = Numerics::sinkhorn_tol);

} // namespace pdabench
