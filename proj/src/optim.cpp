#include "pdabench/optim.hpp"

#include <cmath>

#include "pdabench/errors.hpp"

namespace pdabench {

double lr_at(int iter, const ScheduleConfig& cfg) {
    if (iter < 0) throw ConfigError("lr_at: negative iteration");
    if (cfg.mu0 <= 0.0 || cfg.alpha < 0.0 || cfg.beta < 0.0)
        throw ConfigError("lr_at: invalid schedule");
    return cfg.mu0 * std::pow(1.0 + cfg.alpha * static_cast<double>(iter), -cfg.beta);
}

double grl_coeff(int iter, int total_iters) {
    if (total_iters <= 0) return 1.0;
    const double p = static_cast<double>(iter) / static_cast<double>(total_iters);
    return 2.0 / (1.0 + std::exp(-10.0 * p)) - 1.0;
}

void SgdNesterov::step(const std::vector<Parameter*>& params, double lr) {
    if (lr < 0.0) throw ConfigError("sgd: negative learning rate");
    for (Parameter* p : params) {
        if (!p->requires_grad) continue;
        if (!p->grad.same_shape(p->value))
            throw ConfigError("sgd: grad/param shape mismatch for " + p->name);
        Tensor& v = velocity_[p];
        if (v.size() == 0) v = Tensor(p->value.rows, p->value.cols);

        const double m = cfg_.momentum;
        const double wd = cfg_.weight_decay;
        const double eta = lr * p->lr_multiplier;
        for (std::size_t i = 0; i < v.data.size(); ++i) {
            const double d = p->grad.data[i] + wd * p->value.data[i];
            v.data[i] = m * v.data[i] + d;
            const double upd = cfg_.nesterov ? d + m * v.data[i] : v.data[i];
            p->value.data[i] -= eta * upd;
        }
    }
}

} // namespace pdabench
