#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pdabench/data.hpp"
#include "pdabench/nets.hpp"
#include "pdabench/records.hpp"
#include "pdabench/tensor.hpp"

namespace pdabench {

enum class ScorerKind { SAcc, Ent, Dev, Snd, Oracle, OneShot, Rnd50, Rnd100 };

// ENT and DEV are risk-like (lower is better); everything else is an
// accuracy- or density-like score (higher is better).
bool higher_is_better(ScorerKind kind);
const char* scorer_name(ScorerKind kind);
ScorerKind scorer_from_name(const std::string& name);
std::vector<ScorerKind> all_scorers();
bool uses_target_labels(ScorerKind kind); // oracle and labeled-subset scorers

// --- prediction-level primitives ---------------------------------------

double accuracy(const Tensor& logits, const std::vector<int>& labels);
double accuracy_on_subset(const Tensor& logits, const std::vector<int>& labels,
                          const std::vector<int>& subset);

// Mean softmax entropy in nats.
double mean_prediction_entropy(const Tensor& logits);

// Soft neighborhood density: L2-normalise rows, pairwise similarities with
// the diagonal masked out, temperature-scaled row softmax, mean row entropy.
// Row blocks keep the working set at block_rows x n.
double snd_score(const Tensor& features, double temperature = 0.05, int block_rows = 64);

// Importance-weighted risk with a control variate:
//   eta = -Cov(L, W) / Var(W)  (0 when Var(W) < var_floor)
//   DEV = mean(L) + eta * mean(W) - eta,   L = w .* loss
double dev_estimate(std::span<const double> weights, std::span<const double> loss01);

// --- domain discriminator (for DEV) -------------------------------------

// Linear max-margin scorer over feature embeddings, trained by mini-batch
// subgradient descent; of 5 decay values evenly log-spaced in [1e-2, 1e4]
// the model with the best held-out accuracy wins.
struct DomainDiscriminatorModel {
    std::vector<double> w;
    double bias = 0.0;
    double decay = 0.0;
    double test_accuracy = 0.0;

    double margin(const double* x, int d) const;
    // P(domain == target | x), clamped strictly inside (0, 1).
    double prob_target(const double* x, int d) const;
};

DomainDiscriminatorModel train_domain_discriminator(const Tensor& src_feats,
                                                    const Tensor& tgt_feats,
                                                    std::uint64_t seed,
                                                    int max_pool = 3000,
                                                    int max_iters = 4000);

double score_dev(const DomainDiscriminatorModel& disc, const Tensor& src_val_feats,
                 const Tensor& src_val_logits, const std::vector<int>& src_val_labels,
                 double ns_over_nt);

// --- bundle-level scorers ------------------------------------------------

double score_s_acc(const ModelBundle& bundle, const LabeledSet& src_val);
double score_ent(const ModelBundle& bundle, const LabeledSet& target);
double score_snd(const ModelBundle& bundle, const LabeledSet& target,
                 double temperature = 0.05);
double score_labeled_subset(const ModelBundle& bundle, const LabeledSet& target,
                            const std::vector<int>& subset);

// --- selection -----------------------------------------------------------

// Direction-adjusted argbest over the recorded checkpoints; ties go to the
// earliest iteration. Returns the chosen iteration.
int select_checkpoint(const RunRecord& record, ScorerKind kind);

// End-of-training rule over final checkpoints. Records from methods subject
// to the source-accuracy heuristic are dropped when their final source
// validation accuracy is below the floor; the survivor with the best final
// scorer value wins (ties by hp key). Throws ConfigError when everything is
// filtered.
const RunRecord& select_hyperparams(const std::vector<RunRecord>& final_records,
                                    ScorerKind kind, double source_acc_floor);

// The heuristic applies only to these methods.
bool subject_to_source_acc_filter(const std::string& method);

} // namespace pdabench
