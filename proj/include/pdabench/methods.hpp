#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "pdabench/autodiff.hpp"
#include "pdabench/data.hpp"
#include "pdabench/nets.hpp"
#include "pdabench/numerics.hpp"
#include "pdabench/optim.hpp"
#include "pdabench/records.hpp"
#include "pdabench/selection.hpp"

namespace pdabench {

// --- method configurations ------------------------------------------------

struct SourceOnlyCfg {};

struct PadaCfg {
    double lambda = 0.5;
};

struct SafnCfg {
    double lambda = 0.05;
    double delta_r = 1.0;
};

struct Ba3usCfg {
    double lambda_wce = 1.0;
    double lambda_ent = 0.1;
};

struct ArCfg {
    double rho0 = 2.5;
    double a_up = 5.0;
    double a_low = -5.0; // always -a_up
    double lambda_ent = 0.1;
};

struct JumbotCfg {
    double tau = 0.01;
    double eta1 = 0.0001;
    double eta2 = 0.5;
    double eta3 = 10.0;
};

struct MpotCfg {
    double eps = 0.5;
    double eta1 = 0.01;
    double eta2 = 1.0;
    double mass = 0.3;
};

using MethodConfig =
    std::variant<SourceOnlyCfg, PadaCfg, SafnCfg, Ba3usCfg, ArCfg, JumbotCfg, MpotCfg>;

std::string method_name(const MethodConfig& cfg);
std::map<std::string, double> method_hp(const MethodConfig& cfg);
MethodConfig make_method_config(const std::string& name,
                                const std::map<std::string, double>& hp);
void validate_method_config(const MethodConfig& cfg);
bool uses_stratified_batches(const MethodConfig& cfg); // jumbot and mpot
std::vector<std::string> all_method_names();

// --- training configuration -------------------------------------------------

struct TrainConfig {
    int total_iters = 3000;
    int batch_size = 36;
    int eval_interval = 500; // must divide total_iters
    std::uint64_t seed = 2020;
    ScheduleConfig schedule;

    std::vector<int> backbone_hidden = {128, 128};
    int bottleneck_dim = 256;
    int adversary_hidden = 64;

    int weight_update_interval = 500;    // pada/ba3us class-weight refresh
    int ar_weight_update_interval = 100; // critic-weight re-solve
    double ar_gradient_penalty = 10.0;

    double ot_tol = Numerics::train_ot_tol;
    int ot_max_iter = Numerics::train_ot_max_iter;

    void validate() const;
};

// Prepared data for one run; training only ever samples from src_train.
struct TrainData {
    const LabeledSet* src_train = nullptr;
    const LabeledSet* src_val = nullptr;
    const LabeledSet* target = nullptr;
    const std::map<std::string, std::vector<int>>* subsets = nullptr; // one_shot/rnd_50/rnd_100
};

// --- per-method loss builders (tape level, used by the loop and the tests) ---

Tensor one_hot(const std::vector<int>& labels, int k);

int loss_source_only(Tape& t, ModelBundle& bundle, const Tensor& x, const Tensor& y_onehot);

// Column-mean of target prediction probabilities, normalised to max 1.
std::vector<double> pada_class_weights(const Tensor& target_probs);

int loss_pada(Tape& t, ModelBundle& bundle, Mlp& disc, const Tensor& src_x,
              const Tensor& src_y_onehot, const Tensor& tgt_x,
              const std::vector<double>& gamma, const std::vector<int>& src_labels,
              double lambda, double grl);

int loss_safn(Tape& t, ModelBundle& bundle, const Tensor& src_x, const Tensor& src_y_onehot,
              const Tensor& tgt_x, double lambda, double delta_r);

// aug_tgt_x is the target batch plus the augmentation rows; aug_src_x /
// aug_src_y are the augmentation rows alone (empty when n_aug == 0).
// adv_coeff stays 1 in training; it exists so the zero-adaptation equivalence
// can be expressed.
int loss_ba3us(Tape& t, ModelBundle& bundle, Mlp& disc, const Tensor& src_x,
               const Tensor& src_y_onehot, const std::vector<int>& src_labels,
               const Tensor& tgt_x, const Tensor& aug_tgt_x, const Tensor& aug_src_x,
               const Tensor& aug_src_y_onehot, const std::vector<double>& gamma,
               double lambda_wce_now, double lambda_ent, double grl,
               double adv_coeff = 1.0);

// Sample weights for adversarial reweighting: minimise <w, phi> subject to
// w >= 0, mean(w) = 1, ||w - 1||^2 <= rho0^2 n, by projected gradient with
// alternating projections. Falls back to all-ones on non-convergence.
std::vector<double> ar_solve_weights(const std::vector<double>& phi_vals, double rho0);

struct ArLosses {
    int classifier_loss = -1;
    int critic_loss = -1;
};
ArLosses loss_ar(Tape& t, ModelBundle& bundle, Critic& critic, const Tensor& src_x,
                 const Tensor& src_y_onehot, const Tensor& tgt_x,
                 const std::vector<double>& w_batch, double lambda_ent,
                 double gradient_penalty, Rng& interp_rng);

// eta1 * squared distance + eta2 * cross-entropy of source labels against
// target predictions.
int jumbot_cost(Tape& t, int z_src, const Tensor& src_y_onehot, int z_tgt, int logits_tgt,
                double eta1, double eta2);

int loss_jumbot(Tape& t, ModelBundle& bundle, const Tensor& src_x, const Tensor& src_y_onehot,
                const Tensor& tgt_x, const JumbotCfg& cfg, const TrainConfig& tc,
                bool* plan_converged = nullptr);

int loss_mpot(Tape& t, ModelBundle& bundle, const Tensor& src_x, const Tensor& src_y_onehot,
              const Tensor& tgt_x, const MpotCfg& cfg, const TrainConfig& tc,
              bool* plan_converged = nullptr);

// --- the training loop -------------------------------------------------------

// final_bundle, when given, receives the end-of-training weights.
RunRecord train_run(const MethodConfig& method, const TrainConfig& tc, const TrainData& data,
                    const std::vector<ScorerKind>& scorers, const std::string& task_id,
                    ModelBundle* final_bundle = nullptr);

} // namespace pdabench
