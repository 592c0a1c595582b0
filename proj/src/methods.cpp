#include "pdabench/methods.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>

#include "pdabench/errors.hpp"
#include "pdabench/numerics.hpp"
#include "pdabench/ot.hpp"

namespace pdabench {

namespace {

void require_positive(double v, const char* what) {
    if (!(v > 0.0)) throw ConfigError(std::string("method config: ") + what + " must be positive");
}

double hp_at(const std::map<std::string, double>& hp, const std::string& key) {
    const auto it = hp.find(key);
    if (it == hp.end()) throw ConfigError("method config: missing hyper-parameter '" + key + "'");
    return it->second;
}

} // namespace

std::string method_name(const MethodConfig& cfg) {
    struct Visitor {
        std::string operator()(const SourceOnlyCfg&) const { return "source_only"; }
        std::string operator()(const PadaCfg&) const { return "pada"; }
        std::string operator()(const SafnCfg&) const { return "safn"; }
        std::string operator()(const Ba3usCfg&) const { return "ba3us"; }
        std::string operator()(const ArCfg&) const { return "ar"; }
        std::string operator()(const JumbotCfg&) const { return "jumbot"; }
        std::string operator()(const MpotCfg&) const { return "mpot"; }
    };
    return std::visit(Visitor{}, cfg);
}

std::map<std::string, double> method_hp(const MethodConfig& cfg) {
    struct Visitor {
        std::map<std::string, double> operator()(const SourceOnlyCfg&) const { return {}; }
        std::map<std::string, double> operator()(const PadaCfg& c) const {
            return {{"lambda", c.lambda}};
        }
        std::map<std::string, double> operator()(const SafnCfg& c) const {
            return {{"lambda", c.lambda}, {"delta_r", c.delta_r}};
        }
        std::map<std::string, double> operator()(const Ba3usCfg& c) const {
            return {{"lambda_wce", c.lambda_wce}, {"lambda_ent", c.lambda_ent}};
        }
        std::map<std::string, double> operator()(const ArCfg& c) const {
            return {{"rho0", c.rho0}, {"a_up", c.a_up}, {"a_low", c.a_low},
                    {"lambda_ent", c.lambda_ent}};
        }
        std::map<std::string, double> operator()(const JumbotCfg& c) const {
            return {{"tau", c.tau}, {"eta1", c.eta1}, {"eta2", c.eta2}, {"eta3", c.eta3}};
        }
        std::map<std::string, double> operator()(const MpotCfg& c) const {
            return {{"eps", c.eps}, {"eta1", c.eta1}, {"eta2", c.eta2}, {"m", c.mass}};
        }
    };
    return std::visit(Visitor{}, cfg);
}

MethodConfig make_method_config(const std::string& name,
                                const std::map<std::string, double>& hp) {
    MethodConfig cfg;
    if (name == "source_only") {
        cfg = SourceOnlyCfg{};
    } else if (name == "pada") {
        cfg = PadaCfg{hp_at(hp, "lambda")};
    } else if (name == "safn") {
        cfg = SafnCfg{hp_at(hp, "lambda"), hp_at(hp, "delta_r")};
    } else if (name == "ba3us") {
        cfg = Ba3usCfg{hp_at(hp, "lambda_wce"), hp_at(hp, "lambda_ent")};
    } else if (name == "ar") {
        ArCfg c;
        c.rho0 = hp_at(hp, "rho0");
        c.a_up = hp_at(hp, "a_up");
        c.a_low = hp.count("a_low") ? hp.at("a_low") : -c.a_up;
        c.lambda_ent = hp_at(hp, "lambda_ent");
        cfg = c;
    } else if (name == "jumbot") {
        cfg = JumbotCfg{hp_at(hp, "tau"), hp_at(hp, "eta1"), hp_at(hp, "eta2"),
                        hp_at(hp, "eta3")};
    } else if (name == "mpot") {
        cfg = MpotCfg{hp_at(hp, "eps"), hp_at(hp, "eta1"), hp_at(hp, "eta2"), hp_at(hp, "m")};
    } else {
        throw ConfigError("unknown method '" + name + "'");
    }
    validate_method_config(cfg);
    return cfg;
}

void validate_method_config(const MethodConfig& cfg) {
    struct Visitor {
        void operator()(const SourceOnlyCfg&) const {}
        void operator()(const PadaCfg& c) const { require_positive(c.lambda, "lambda"); }
        void operator()(const SafnCfg& c) const {
            require_positive(c.lambda, "lambda");
            require_positive(c.delta_r, "delta_r");
        }
        void operator()(const Ba3usCfg& c) const {
            require_positive(c.lambda_wce, "lambda_wce");
            require_positive(c.lambda_ent, "lambda_ent");
        }
        void operator()(const ArCfg& c) const {
            if (c.rho0 < 0.0) throw ConfigError("method config: rho0 must be >= 0");
            require_positive(c.a_up, "a_up");
            require_positive(c.lambda_ent, "lambda_ent");
            if (c.a_low != -c.a_up)
                throw ConfigError("method config: a_low must equal -a_up");
        }
        void operator()(const JumbotCfg& c) const {
            require_positive(c.tau, "tau");
            require_positive(c.eta1, "eta1");
            require_positive(c.eta2, "eta2");
            require_positive(c.eta3, "eta3");
        }
        void operator()(const MpotCfg& c) const {
            require_positive(c.eps, "eps");
            require_positive(c.eta1, "eta1");
            require_positive(c.eta2, "eta2");
            if (!(c.mass > 0.0 && c.mass <= 1.0))
                throw ConfigError("method config: m must be in (0, 1]");
        }
    };
    std::visit(Visitor{}, cfg);
}

bool uses_stratified_batches(const MethodConfig& cfg) {
    return std::holds_alternative<JumbotCfg>(cfg) || std::holds_alternative<MpotCfg>(cfg);
}

std::vector<std::string> all_method_names() {
    return {"source_only", "pada", "safn", "ba3us", "ar", "jumbot", "mpot"};
}

void TrainConfig::validate() const {
    if (total_iters < 0) throw ConfigError("train config: total_iters must be >= 0");
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (eval_interval < 1) throw ConfigError("train config: eval_interval must be >= 1");
    if (total_iters % eval_interval != 0)
        throw ConfigError("train config: eval_interval must divide total_iters");
    if (bottleneck_dim < 1) throw ConfigError("train config: bottleneck_dim must be >= 1");
}

Tensor one_hot(const std::vector<int>& labels, int k) {
    Tensor y(static_cast<int>(labels.size()), k);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= k) throw ConfigError("one_hot: label out of range");
        y(static_cast<int>(i), labels[i]) = 1.0;
    }
    return y;
}

namespace {

Tensor gamma_weights_for(const std::vector<int>& labels, const std::vector<double>& gamma) {
    Tensor w(static_cast<int>(labels.size()), 1);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || y >= static_cast<int>(gamma.size()))
            throw ConfigError("gamma weights: label out of range");
        w(static_cast<int>(i), 0) = std::max(gamma[static_cast<std::size_t>(y)], Numerics::prob_floor);
    }
    return w;
}

// Mean softmax entropy of a logits node, as a tape expression.
int prediction_entropy(Tape& t, int logits) {
    const int n = t.value(logits).rows;
    int p = t.row_softmax(logits);
    int logp = t.log(t.clamp(p, Numerics::prob_floor, 1.0));
    return t.scale(t.sum(t.mul(p, logp)), -1.0 / n);
}

// DANN-style domain loss: discriminator sees source (label 1) and target
// (label 0) features through a gradient-reversal layer.
int domain_adversarial_loss(Tape& t, Mlp& disc, int z_src, int z_tgt, double grl,
                            const Tensor& sample_weights) {
    const int ns = t.value(z_src).rows;
    const int nt = t.value(z_tgt).rows;
    int z_all = t.grad_reverse(t.concat_rows(z_src, z_tgt), grl);
    auto fwd = forward_mlp(t, disc, z_all);
    Tensor targets(ns + nt, 1);
    for (int i = 0; i < ns; ++i) targets(i, 0) = 1.0;
    return t.bce_logits(fwd.out, targets, sample_weights);
}

} // namespace

int loss_source_only(Tape& t, ModelBundle& bundle, const Tensor& x, const Tensor& y_onehot) {
    int logits = forward_logits(t, bundle, t.constant(x));
    return t.softmax_xent(logits, y_onehot);
}

std::vector<double> pada_class_weights(const Tensor& target_probs) {
    if (target_probs.rows == 0) throw ConfigError("pada_class_weights: empty predictions");
    for (int i = 0; i < target_probs.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < target_probs.cols; ++j) s += target_probs(i, j);
        if (std::abs(s - 1.0) > 1e-6)
            throw ConfigError("pada_class_weights: probability rows must sum to 1");
    }
    std::vector<double> gamma(static_cast<std::size_t>(target_probs.cols), 0.0);
    for (int i = 0; i < target_probs.rows; ++i)
        for (int j = 0; j < target_probs.cols; ++j)
            gamma[static_cast<std::size_t>(j)] += target_probs(i, j);
    double mx = 0.0;
    for (double& g : gamma) {
        g /= target_probs.rows;
        mx = std::max(mx, g);
    }
    if (mx <= 0.0) throw ConfigError("pada_class_weights: degenerate all-zero mean");
    for (double& g : gamma) g /= mx;
    return gamma;
}

int loss_pada(Tape& t, ModelBundle& bundle, Mlp& disc, const Tensor& src_x,
              const Tensor& src_y_onehot, const Tensor& tgt_x,
              const std::vector<double>& gamma, const std::vector<int>& src_labels,
              double lambda, double grl) {
    int z_src = forward_features(t, bundle, t.constant(src_x));
    int z_tgt = forward_features(t, bundle, t.constant(tgt_x));
    int logits_src = forward_logits_from_features(t, bundle, z_src);

    const Tensor w_src = gamma_weights_for(src_labels, gamma);
    int ce = t.softmax_xent(logits_src, src_y_onehot, w_src);

    Tensor w_domain(src_x.rows + tgt_x.rows, 1);
    for (int i = 0; i < src_x.rows; ++i) w_domain(i, 0) = w_src(i, 0);
    for (int i = 0; i < tgt_x.rows; ++i) w_domain(src_x.rows + i, 0) = 1.0;
    int adv = domain_adversarial_loss(t, disc, z_src, z_tgt, grl, w_domain);

    return t.add(ce, t.scale(adv, lambda));
}

int loss_safn(Tape& t, ModelBundle& bundle, const Tensor& src_x, const Tensor& src_y_onehot,
              const Tensor& tgt_x, double lambda, double delta_r) {
    int z_src = forward_features(t, bundle, t.constant(src_x));
    int z_tgt = forward_features(t, bundle, t.constant(tgt_x));
    int ce = t.softmax_xent(forward_logits_from_features(t, bundle, z_src), src_y_onehot);

    // stepwise norm growth: target radius is the detached current norm + dr
    int norms = t.row_l2_norm(t.concat_rows(z_src, z_tgt));
    int target_r = t.add(t.stop_gradient(norms),
                         t.constant(Tensor::full(t.value(norms).rows, 1, delta_r)));
    int gap = t.sub(target_r, norms);
    int norm_term = t.mean(t.square(gap));
    return t.add(ce, t.scale(norm_term, lambda));
}

int loss_ba3us(Tape& t, ModelBundle& bundle, Mlp& disc, const Tensor& src_x,
               const Tensor& src_y_onehot, const std::vector<int>& src_labels,
               const Tensor& tgt_x, const Tensor& aug_tgt_x, const Tensor& aug_src_x,
               const Tensor& aug_src_y_onehot, const std::vector<double>& gamma,
               double lambda_wce_now, double lambda_ent, double grl, double adv_coeff) {
    int z_src = forward_features(t, bundle, t.constant(src_x));
    int logits_src = forward_logits_from_features(t, bundle, z_src);
    int ce = t.softmax_xent(logits_src, src_y_onehot, gamma_weights_for(src_labels, gamma));

    int loss = ce;
    if (adv_coeff != 0.0) {
        // adversarial part: source batch vs target batch augmented with source rows
        int z_aug_tgt = forward_features(t, bundle, t.constant(aug_tgt_x));
        int adv = domain_adversarial_loss(t, disc, z_src, z_aug_tgt, grl, Tensor());
        loss = t.add(ce, t.scale(adv, adv_coeff));
    }

    if (aug_src_x.rows > 0 && lambda_wce_now > 0.0) {
        // complement entropy over the incorrect classes of the augmentation rows
        int logits_aug = forward_logits(t, bundle, t.constant(aug_src_x));
        int p = t.row_softmax(logits_aug);
        Tensor complement_mask(aug_src_y_onehot.rows, aug_src_y_onehot.cols);
        for (int i = 0; i < complement_mask.size(); ++i)
            complement_mask.data[static_cast<std::size_t>(i)] =
                1.0 - aug_src_y_onehot.data[static_cast<std::size_t>(i)];
        int q = t.mul(p, t.constant(complement_mask));
        int denom = t.clamp(t.row_sum(q), Numerics::prob_floor, 1.0);
        int phat = t.rows_div(q, denom);
        int terms = t.mul(phat, t.log(t.clamp(phat, Numerics::prob_floor, 1.0)));
        int comp_ent = t.scale(t.sum(terms), 1.0 / aug_src_x.rows);
        loss = t.add(loss, t.scale(comp_ent, lambda_wce_now));
    }

    int logits_tgt = forward_logits(t, bundle, t.constant(tgt_x));
    loss = t.add(loss, t.scale(prediction_entropy(t, logits_tgt), lambda_ent));
    return loss;
}

std::vector<double> ar_solve_weights(const std::vector<double>& phi_vals, double rho0) {
    const int n = static_cast<int>(phi_vals.size());
    if (n < 2) throw ConfigError("ar_solve_weights: need at least 2 samples");
    if (rho0 < 0.0) throw ConfigError("ar_solve_weights: rho0 must be >= 0");

    const double radius = rho0 * std::sqrt(static_cast<double>(n));
    std::vector<double> w(static_cast<std::size_t>(n), 1.0);
    if (radius == 0.0) return w;

    double phi_mean = 0.0;
    for (double v : phi_vals) phi_mean += v;
    phi_mean /= n;
    double phi_dev = 0.0;
    for (double v : phi_vals) phi_dev += (v - phi_mean) * (v - phi_mean);
    phi_dev = std::sqrt(phi_dev);
    const double step0 = radius / (phi_dev + 1e-12);

    auto project = [&](std::vector<double>& x) {
        for (int cycle = 0; cycle < 64; ++cycle) {
            double mean = 0.0;
            for (double v : x) mean += v;
            mean /= n;
            for (double& v : x) v += 1.0 - mean;

            double dist = 0.0;
            for (double v : x) dist += (v - 1.0) * (v - 1.0);
            dist = std::sqrt(dist);
            if (dist > radius) {
                const double s = radius / dist;
                for (double& v : x) v = 1.0 + (v - 1.0) * s;
            }

            bool clipped = false;
            for (double& v : x)
                if (v < 0.0) {
                    v = 0.0;
                    clipped = true;
                }
            if (!clipped) {
                double m2 = 0.0;
                for (double v : x) m2 += v;
                if (std::abs(m2 / n - 1.0) < 1e-13) return;
            }
        }
    };

    bool converged = false;
    std::vector<double> prev = w;
    double step = 2.0 * step0;
    for (int k = 1; k <= Numerics::ar_solver_max_iter; ++k) {
        // geometric decay: large early steps cross the feasible set, late
        // steps shrink below the stopping threshold
        step *= 0.985;
        for (int i = 0; i < n; ++i)
            w[static_cast<std::size_t>(i)] -= step * phi_vals[static_cast<std::size_t>(i)];
        project(w);
        double change = 0.0;
        for (int i = 0; i < n; ++i)
            change = std::max(change, std::abs(w[static_cast<std::size_t>(i)] -
                                               prev[static_cast<std::size_t>(i)]));
        if (change < Numerics::ar_solver_tol) {
            converged = true;
            break;
        }
        prev = w;
    }
    if (!converged) {
        std::cerr << "ar_solve_weights: projected gradient did not converge; using uniform weights\n";
        std::fill(w.begin(), w.end(), 1.0);
    }
    return w;
}

ArLosses loss_ar(Tape& t, ModelBundle& bundle, Critic& critic, const Tensor& src_x,
                 const Tensor& src_y_onehot, const Tensor& tgt_x,
                 const std::vector<double>& w_batch, double lambda_ent,
                 double gradient_penalty, Rng& interp_rng) {
    if (src_x.rows != tgt_x.rows)
        throw ConfigError("loss_ar: source and target batches must be equal-sized");
    const int n = src_x.rows;
    Tensor w_col(n, 1);
    // solved weights can be exactly zero on many samples; the floor keeps an
    // all-zero batch from degenerating the weighted mean
    for (int i = 0; i < n; ++i)
        w_col(i, 0) = std::max(w_batch[static_cast<std::size_t>(i)], Numerics::prob_floor);

    int z_src = forward_features(t, bundle, t.constant(src_x));
    int z_tgt = forward_features(t, bundle, t.constant(tgt_x));

    ArLosses out;

    // --- classifier/feature loss (critic frozen by the update schedule) ---
    {
        int logits_src = forward_logits_from_features(t, bundle, z_src);
        int ce = t.softmax_xent(logits_src, src_y_onehot, w_col);

        auto fwd_s = forward_mlp(t, critic.net, z_src);
        auto fwd_t = forward_mlp(t, critic.net, z_tgt);
        int phi_s = t.clamp(fwd_s.out, critic.a_low, critic.a_up);
        int phi_t = t.clamp(fwd_t.out, critic.a_low, critic.a_up);
        int align = t.sub(t.mean(phi_t), t.mean(t.mul(t.constant(w_col), phi_s)));

        int logits_tgt = forward_logits_from_features(t, bundle, z_tgt);
        int ent = prediction_entropy(t, logits_tgt);

        out.classifier_loss = t.add(t.add(ce, align), t.scale(ent, lambda_ent));
    }

    // --- critic loss on detached features ---
    {
        int zs = t.stop_gradient(z_src);
        int zt = t.stop_gradient(z_tgt);
        auto fwd_s = forward_mlp(t, critic.net, zs);
        auto fwd_t = forward_mlp(t, critic.net, zt);
        int phi_s = t.clamp(fwd_s.out, critic.a_low, critic.a_up);
        int phi_t = t.clamp(fwd_t.out, critic.a_low, critic.a_up);
        int gap = t.sub(t.mean(phi_t), t.mean(t.mul(t.constant(w_col), phi_s)));
        int critic_loss = t.scale(gap, -1.0);

        if (gradient_penalty > 0.0) {
            const int dim = t.value(zs).cols;
            Tensor u(n, dim), v(n, dim);
            for (int i = 0; i < n; ++i) {
                const double ui = interp_rng.uniform();
                for (int j = 0; j < dim; ++j) {
                    u(i, j) = ui;
                    v(i, j) = 1.0 - ui;
                }
            }
            int interp = t.add(t.mul(t.constant(u), zs), t.mul(t.constant(v), zt));
            auto fwd_i = forward_mlp(t, critic.net, interp);
            int grad_in = mlp_input_grad(t, critic.net, interp, fwd_i);
            int norms = t.row_l2_norm(grad_in);
            int gp = t.mean(t.square(t.sub(norms, t.constant(Tensor::full(n, 1, 1.0)))));
            critic_loss = t.add(critic_loss, t.scale(gp, gradient_penalty));
        }
        out.critic_loss = critic_loss;
    }
    return out;
}

int jumbot_cost(Tape& t, int z_src, const Tensor& src_y_onehot, int z_tgt, int logits_tgt,
                double eta1, double eta2) {
    int sq = t.pairwise_sqdist(z_src, z_tgt);
    // CE(y_s_i, p_t_j) = -(Y log p_t^T)_ij
    int ce = t.scale(t.matmul_nt(t.constant(src_y_onehot), t.row_log_softmax(logits_tgt)), -1.0);
    return t.add(t.scale(sq, eta1), t.scale(ce, eta2));
}

namespace {

int ot_alignment_loss(Tape& t, ModelBundle& bundle, const Tensor& src_x,
                      const Tensor& src_y_onehot, const Tensor& tgt_x, double eta1,
                      double eta2, const std::function<TransportPlan(const Tensor&)>& solve,
                      bool* plan_converged) {
    int z_src = forward_features(t, bundle, t.constant(src_x));
    int z_tgt = forward_features(t, bundle, t.constant(tgt_x));
    int logits_src = forward_logits_from_features(t, bundle, z_src);
    int logits_tgt = forward_logits_from_features(t, bundle, z_tgt);
    int ce = t.softmax_xent(logits_src, src_y_onehot);

    int cost = jumbot_cost(t, z_src, src_y_onehot, z_tgt, logits_tgt, eta1, eta2);
    TransportPlan plan = solve(t.value(cost));
    if (plan_converged) *plan_converged = plan.converged;

    // the plan is a constant: gradients flow only through the cost matrix
    int ot_term = t.sum(t.mul(t.constant(plan.pi), cost));
    return t.add(ce, ot_term);
}

} // namespace

int loss_jumbot(Tape& t, ModelBundle& bundle, const Tensor& src_x, const Tensor& src_y_onehot,
                const Tensor& tgt_x, const JumbotCfg& cfg, const TrainConfig& tc,
                bool* plan_converged) {
    const int n = src_x.rows;
    const int m = tgt_x.rows;
    auto solve = [&](const Tensor& cost) {
        return sinkhorn_uot(cost, std::vector<double>(n, 1.0 / n),
                            std::vector<double>(m, 1.0 / m), cfg.tau, cfg.eta3,
                            tc.ot_max_iter, tc.ot_tol);
    };
    return ot_alignment_loss(t, bundle, src_x, src_y_onehot, tgt_x, cfg.eta1, cfg.eta2, solve,
                             plan_converged);
}

int loss_mpot(Tape& t, ModelBundle& bundle, const Tensor& src_x, const Tensor& src_y_onehot,
              const Tensor& tgt_x, const MpotCfg& cfg, const TrainConfig& tc,
              bool* plan_converged) {
    const int n = src_x.rows;
    const int m = tgt_x.rows;
    auto solve = [&](const Tensor& cost) {
        return partial_ot_entropic(cost, std::vector<double>(n, 1.0 / n),
                                   std::vector<double>(m, 1.0 / m), cfg.mass, cfg.eps,
                                   tc.ot_max_iter, tc.ot_tol);
    };
    return ot_alignment_loss(t, bundle, src_x, src_y_onehot, tgt_x, cfg.eta1, cfg.eta2, solve,
                             plan_converged);
}

// --- the training loop -----------------------------------------------------

namespace {

Tensor gather_rows(const Tensor& m, const std::vector<int>& idx) {
    Tensor out(static_cast<int>(idx.size()), m.cols);
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (int j = 0; j < m.cols; ++j) out(static_cast<int>(r), j) = m(idx[r], j);
    return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(labels[static_cast<std::size_t>(i)]);
    return out;
}

std::vector<double> softmax_probs_rowwise(Tensor logits) {
    for (int i = 0; i < logits.rows; ++i) {
        double m = -1e300;
        for (int j = 0; j < logits.cols; ++j) m = std::max(m, logits(i, j));
        double z = 0.0;
        for (int j = 0; j < logits.cols; ++j) z += std::exp(logits(i, j) - m);
        for (int j = 0; j < logits.cols; ++j) logits(i, j) = std::exp(logits(i, j) - m) / z;
    }
    return logits.data;
}

} // namespace

RunRecord train_run(const MethodConfig& method, const TrainConfig& tc, const TrainData& data,
                    const std::vector<ScorerKind>& scorers, const std::string& task_id,
                    ModelBundle* final_bundle) {
    tc.validate();
    validate_method_config(method);
    if (!data.src_train || !data.src_val || !data.target)
        throw ConfigError("train_run: data views must be set");
    const LabeledSet& src_train = *data.src_train;
    const LabeledSet& src_val = *data.src_val;
    const LabeledSet& target = *data.target;
    src_train.validate();
    if (tc.batch_size > src_train.n() || tc.batch_size > target.n())
        throw ConfigError("train_run: batch size exceeds a dataset side");

    const auto t_start = std::chrono::steady_clock::now();
    const std::string name = method_name(method);
    const int k = src_train.k_universe;

    RunRecord record;
    record.method = name;
    record.hp = method_hp(method);
    record.seed = tc.seed;
    record.task_id = task_id;

    NetDims dims;
    dims.in_dim = src_train.dim();
    dims.backbone_hidden = tc.backbone_hidden;
    dims.bottleneck = tc.bottleneck_dim;
    dims.num_classes = k;
    ModelBundle bundle = init_bundle(dims, Rng::mix(tc.seed, 0xB00F));

    const bool needs_disc =
        std::holds_alternative<PadaCfg>(method) || std::holds_alternative<Ba3usCfg>(method);
    Mlp disc;
    if (needs_disc)
        disc = init_mlp(tc.bottleneck_dim, {tc.adversary_hidden}, Rng::mix(tc.seed, 0xD15C));

    const bool is_ar = std::holds_alternative<ArCfg>(method);
    Critic critic;
    if (is_ar) {
        const ArCfg& acfg = std::get<ArCfg>(method);
        critic.net = init_mlp(tc.bottleneck_dim, {tc.adversary_hidden}, Rng::mix(tc.seed, 0xC817));
        critic.a_low = acfg.a_low;
        critic.a_up = acfg.a_up;
    }

    std::vector<Parameter*> main_params = bundle.params();
    if (needs_disc)
        for (Parameter* p : disc.params()) main_params.push_back(p);
    std::vector<Parameter*> critic_params = is_ar ? critic.net.params() : std::vector<Parameter*>{};

    SgdNesterov opt_main;
    SgdNesterov opt_critic;

    Rng rng_batch(Rng::mix(tc.seed, 0xBA7C));
    Rng rng_aug(Rng::mix(tc.seed, 0xA060));
    Rng rng_interp(Rng::mix(tc.seed, 0x1274));

    std::vector<double> gamma(static_cast<std::size_t>(k), 1.0);
    std::vector<double> w_src(static_cast<std::size_t>(src_train.n()), 1.0);

    const bool stratified = uses_stratified_batches(method);
    ScheduleConfig schedule = tc.schedule;
    schedule.total_iters = tc.total_iters;

    const double ns_over_nt = static_cast<double>(src_train.n()) / target.n();
    bool warned_plan = false;

    auto evaluate = [&](int iter) {
        CheckpointScore row;
        row.iteration = iter;
        const Tensor feats_val = infer_features(bundle, src_val.features);
        const Tensor logits_val = infer_logits_from_features(bundle, feats_val);
        const Tensor feats_tgt = infer_features(bundle, target.features);
        const Tensor logits_tgt = infer_logits_from_features(bundle, feats_tgt);
        row.src_val_acc = accuracy(logits_val, src_val.labels);
        row.target_acc = accuracy(logits_tgt, target.labels);
        row.scores["oracle"] = row.target_acc;
        row.scores["s_acc"] = row.src_val_acc;
        for (ScorerKind kind : scorers) {
            switch (kind) {
                case ScorerKind::SAcc:
                case ScorerKind::Oracle: break; // already present
                case ScorerKind::Ent:
                    row.scores["ent"] = mean_prediction_entropy(logits_tgt);
                    break;
                case ScorerKind::Snd:
                    row.scores["snd"] = snd_score(feats_tgt);
                    break;
                case ScorerKind::Dev: {
                    const Tensor feats_train = infer_features(bundle, src_train.features);
                    const auto disc_model = train_domain_discriminator(
                        feats_train, feats_tgt,
                        Rng::mix(tc.seed, 0xDE00 + static_cast<std::uint64_t>(iter)));
                    row.scores["dev"] =
                        score_dev(disc_model, feats_val, logits_val, src_val.labels, ns_over_nt);
                    break;
                }
                case ScorerKind::OneShot:
                case ScorerKind::Rnd50:
                case ScorerKind::Rnd100: {
                    if (!data.subsets)
                        throw ConfigError("train_run: labeled subsets required for scorer " +
                                          std::string(scorer_name(kind)));
                    const auto it = data.subsets->find(scorer_name(kind));
                    if (it == data.subsets->end())
                        throw ConfigError("train_run: subset '" +
                                          std::string(scorer_name(kind)) + "' not prepared");
                    row.scores[scorer_name(kind)] =
                        accuracy_on_subset(logits_tgt, target.labels, it->second);
                    break;
                }
            }
        }
        record.checkpoints.push_back(std::move(row));
    };

    evaluate(0);

    try {
        for (int iter = 0; iter < tc.total_iters; ++iter) {
            const double lr = lr_at(iter, schedule);

            if ((std::holds_alternative<PadaCfg>(method) ||
                 std::holds_alternative<Ba3usCfg>(method)) &&
                iter % tc.weight_update_interval == 0) {
                Tensor probs(target.n(), k);
                probs.data = softmax_probs_rowwise(infer_logits(bundle, target.features));
                gamma = pada_class_weights(probs);
            }
            if (is_ar && iter % tc.ar_weight_update_interval == 0) {
                const ArCfg& acfg = std::get<ArCfg>(method);
                Tensor phi = infer_mlp(critic.net, infer_features(bundle, src_train.features));
                std::vector<double> phi_vals(phi.data);
                for (double& v : phi_vals) v = std::min(std::max(v, acfg.a_low), acfg.a_up);
                w_src = ar_solve_weights(phi_vals, acfg.rho0);
            }

            const std::vector<int> src_idx =
                stratified ? sample_stratified_batch(src_train, tc.batch_size, rng_batch)
                           : sample_uniform_batch(src_train, tc.batch_size, rng_batch);
            const std::vector<int> tgt_idx = sample_uniform_batch(target, tc.batch_size, rng_batch);

            const Tensor src_x = gather_rows(src_train.features, src_idx);
            const std::vector<int> src_y = gather_labels(src_train.labels, src_idx);
            const Tensor src_onehot = one_hot(src_y, k);
            const Tensor tgt_x = gather_rows(target.features, tgt_idx);

            Tape tape;
            const double grl = grl_coeff(iter, tc.total_iters);

            if (is_ar) {
                std::vector<double> w_batch;
                w_batch.reserve(src_idx.size());
                for (int i : src_idx) w_batch.push_back(w_src[static_cast<std::size_t>(i)]);
                const ArCfg& acfg = std::get<ArCfg>(method);
                ArLosses losses = loss_ar(tape, bundle, critic, src_x, src_onehot, tgt_x,
                                          w_batch, acfg.lambda_ent, tc.ar_gradient_penalty,
                                          rng_interp);
                if (iter % 2 == 0) { // critic step
                    zero_grads(critic_params);
                    zero_grads(main_params);
                    tape.backward(losses.critic_loss);
                    opt_critic.step(critic_params, lr);
                } else { // main step
                    zero_grads(critic_params);
                    zero_grads(main_params);
                    tape.backward(losses.classifier_loss);
                    opt_main.step(main_params, lr);
                }
            } else {
                int loss = -1;
                bool plan_ok = true;
                if (std::holds_alternative<SourceOnlyCfg>(method)) {
                    loss = loss_source_only(tape, bundle, src_x, src_onehot);
                } else if (const PadaCfg* c = std::get_if<PadaCfg>(&method)) {
                    loss = loss_pada(tape, bundle, disc, src_x, src_onehot, tgt_x, gamma, src_y,
                                     c->lambda, grl);
                } else if (const SafnCfg* c2 = std::get_if<SafnCfg>(&method)) {
                    loss = loss_safn(tape, bundle, src_x, src_onehot, tgt_x, c2->lambda,
                                     c2->delta_r);
                } else if (const Ba3usCfg* c3 = std::get_if<Ba3usCfg>(&method)) {
                    const int n_aug = static_cast<int>(std::ceil(
                        tc.batch_size *
                        std::max(0.0, 1.0 - static_cast<double>(iter) / tc.total_iters)));
                    Tensor aug_src_x(0, src_train.dim());
                    Tensor aug_src_onehot(0, k);
                    Tensor aug_tgt_x = tgt_x;
                    if (n_aug > 0) {
                        const auto aug_idx = sample_uniform_batch(src_train, n_aug, rng_aug);
                        aug_src_x = gather_rows(src_train.features, aug_idx);
                        aug_src_onehot = one_hot(gather_labels(src_train.labels, aug_idx), k);
                        Tensor merged(tgt_x.rows + n_aug, tgt_x.cols);
                        std::copy(tgt_x.data.begin(), tgt_x.data.end(), merged.data.begin());
                        std::copy(aug_src_x.data.begin(), aug_src_x.data.end(),
                                  merged.data.begin() + tgt_x.data.size());
                        aug_tgt_x = std::move(merged);
                    }
                    const double wce_now =
                        c3->lambda_wce * static_cast<double>(iter) / tc.total_iters;
                    loss = loss_ba3us(tape, bundle, disc, src_x, src_onehot, src_y, tgt_x,
                                      aug_tgt_x, aug_src_x, aug_src_onehot, gamma, wce_now,
                                      c3->lambda_ent, grl);
                } else if (const JumbotCfg* c4 = std::get_if<JumbotCfg>(&method)) {
                    loss = loss_jumbot(tape, bundle, src_x, src_onehot, tgt_x, *c4, tc, &plan_ok);
                } else if (const MpotCfg* c5 = std::get_if<MpotCfg>(&method)) {
                    loss = loss_mpot(tape, bundle, src_x, src_onehot, tgt_x, *c5, tc, &plan_ok);
                }
                if (!plan_ok && !warned_plan) {
                    std::cerr << "train_run(" << name
                              << "): transport plan did not converge within the step budget; "
                                 "using it as-is\n";
                    warned_plan = true;
                }
                zero_grads(main_params);
                tape.backward(loss);
                opt_main.step(main_params, lr);
            }

            if ((iter + 1) % tc.eval_interval == 0) evaluate(iter + 1);
        }
    } catch (const NumericError& e) {
        std::cerr << "train_run(" << name << ", seed " << tc.seed
                  << "): aborted on numeric error: " << e.what() << "\n";
        record.status = "failed";
    }

    if (final_bundle) *final_bundle = bundle;
    record.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return record;
}

} // namespace pdabench
