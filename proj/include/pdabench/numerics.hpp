#pragma once

namespace pdabench {

// All tolerance and clamp constants live here so tests and kernels agree.
struct Numerics {
    // Probabilities are clamped to [prob_floor, 1 - prob_floor] before any log
    // or ratio.
    static constexpr double prob_floor = 1e-12;

    // Guard for row-norm divisions (L2-normalisation, norm backward).
    static constexpr double norm_floor = 1e-30;

    // Central finite differences used by the gradient oracles.
    static constexpr double fd_step = 1e-5;
    static constexpr double fd_rel_tol = 1e-4;

    // Sinkhorn family: defaults for test/offline use.
    static constexpr double sinkhorn_tol = 1e-9;
    static constexpr int sinkhorn_max_iter = 20000;

    // Sinkhorn family: looser settings used inside training steps.
    static constexpr double train_ot_tol = 1e-5;
    static constexpr int train_ot_max_iter = 250;

    // Variance floor below which the DEV control-variate coefficient is zero.
    static constexpr double var_floor = 1e-12;

    // Projected-gradient solver for adversarial sample weights.
    static constexpr double ar_solver_tol = 1e-8;
    static constexpr int ar_solver_max_iter = 20000;
};

} // namespace pdabench
