#pragma once

#include <unordered_map>
#include <vector>

#include "pdabench/autodiff.hpp"

namespace pdabench {

// Polynomial-decay learning-rate schedule: mu_i = mu0 * (1 + alpha * i)^(-beta).
struct ScheduleConfig {
    double mu0 = 0.01;
    double alpha = 0.001;
    double beta = 0.75;
    int total_iters = 5000;
};

double lr_at(int iter, const ScheduleConfig& cfg);

// Adversarial ramp for the gradient-reversal coefficient:
// 2 / (1 + exp(-10 p)) - 1 with p = iter / total.
double grl_coeff(int iter, int total_iters);

struct SgdConfig {
    double momentum = 0.9;
    double weight_decay = 5e-4;
    bool nesterov = true;
};

// SGD with momentum, weight decay and optional Nesterov acceleration.
// Per-parameter velocity buffers are created on first use; each parameter's
// lr_multiplier scales the step.
class SgdNesterov {
  public:
    explicit SgdNesterov(SgdConfig cfg = {}) : cfg_(cfg) {}

    void step(const std::vector<Parameter*>& params, double lr);

    const SgdConfig& config() const { return cfg_; }

  private:
    SgdConfig cfg_;
    std::unordered_map<const Parameter*, Tensor> velocity_;
};

} // namespace pdabench
