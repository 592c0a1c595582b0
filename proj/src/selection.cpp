#include "pdabench/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pdabench/errors.hpp"
#include "pdabench/numerics.hpp"
#include "pdabench/rng.hpp"

namespace pdabench {

bool higher_is_better(ScorerKind kind) {
    switch (kind) {
        case ScorerKind::Ent:
        case ScorerKind::Dev: return false;
        default: return true;
    }
}

const char* scorer_name(ScorerKind kind) {
    switch (kind) {
        case ScorerKind::SAcc: return "s_acc";
        case ScorerKind::Ent: return "ent";
        case ScorerKind::Dev: return "dev";
        case ScorerKind::Snd: return "snd";
        case ScorerKind::Oracle: return "oracle";
        case ScorerKind::OneShot: return "one_shot";
        case ScorerKind::Rnd50: return "rnd_50";
        case ScorerKind::Rnd100: return "rnd_100";
    }
    return "?";
}

ScorerKind scorer_from_name(const std::string& name) {
    for (ScorerKind k : all_scorers())
        if (name == scorer_name(k)) return k;
    throw ConfigError("unknown scorer '" + name + "'");
}

std::vector<ScorerKind> all_scorers() {
    return {ScorerKind::SAcc,   ScorerKind::Ent,     ScorerKind::Dev,   ScorerKind::Snd,
            ScorerKind::Oracle, ScorerKind::OneShot, ScorerKind::Rnd50, ScorerKind::Rnd100};
}

bool uses_target_labels(ScorerKind kind) {
    switch (kind) {
        case ScorerKind::Oracle:
        case ScorerKind::OneShot:
        case ScorerKind::Rnd50:
        case ScorerKind::Rnd100: return true;
        default: return false;
    }
}

namespace {

int argmax_row(const Tensor& logits, int i) {
    int best = 0;
    for (int j = 1; j < logits.cols; ++j)
        if (logits(i, j) > logits(i, best)) best = j;
    return best;
}

} // namespace

double accuracy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rows == 0) throw ConfigError("accuracy: empty predictions");
    if (static_cast<int>(labels.size()) != logits.rows)
        throw ConfigError("accuracy: label count mismatch");
    int correct = 0;
    for (int i = 0; i < logits.rows; ++i)
        if (argmax_row(logits, i) == labels[static_cast<std::size_t>(i)]) ++correct;
    return static_cast<double>(correct) / logits.rows;
}

double accuracy_on_subset(const Tensor& logits, const std::vector<int>& labels,
                          const std::vector<int>& subset) {
    if (subset.empty()) throw ConfigError("accuracy_on_subset: empty subset");
    int correct = 0;
    for (int idx : subset) {
        if (idx < 0 || idx >= logits.rows) throw ConfigError("accuracy_on_subset: bad index");
        if (argmax_row(logits, idx) == labels[static_cast<std::size_t>(idx)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(subset.size());
}

double mean_prediction_entropy(const Tensor& logits) {
    if (logits.rows == 0) throw ConfigError("mean_prediction_entropy: empty predictions");
    double total = 0.0;
    for (int i = 0; i < logits.rows; ++i) {
        double m = -1e300;
        for (int j = 0; j < logits.cols; ++j) m = std::max(m, logits(i, j));
        double z = 0.0;
        for (int j = 0; j < logits.cols; ++j) z += std::exp(logits(i, j) - m);
        double h = 0.0;
        for (int j = 0; j < logits.cols; ++j) {
            const double p = std::exp(logits(i, j) - m) / z;
            if (p > 0.0) h -= p * std::log(p);
        }
        total += h;
    }
    return total / logits.rows;
}

double snd_score(const Tensor& features, double temperature, int block_rows) {
    const int n = features.rows;
    const int d = features.cols;
    if (n < 2) throw ConfigError("snd: need at least 2 samples");
    if (temperature <= 0.0) throw ConfigError("snd: temperature must be positive");

    Tensor x = features;
    for (int i = 0; i < n; ++i) {
        double norm = 0.0;
        for (int j = 0; j < d; ++j) norm += x(i, j) * x(i, j);
        norm = std::sqrt(std::max(norm, Numerics::norm_floor));
        for (int j = 0; j < d; ++j) x(i, j) /= norm;
    }

    double total = 0.0;
    std::vector<double> sims(static_cast<std::size_t>(n));
    for (int r0 = 0; r0 < n; r0 += block_rows) {
        const int r1 = std::min(n, r0 + block_rows);
        for (int i = r0; i < r1; ++i) {
            for (int j = 0; j < n; ++j) {
                double s = 0.0;
                for (int k = 0; k < d; ++k) s += x(i, k) * x(j, k);
                sims[static_cast<std::size_t>(j)] = s / temperature;
            }
            sims[static_cast<std::size_t>(i)] = -std::numeric_limits<double>::infinity();

            double m = -std::numeric_limits<double>::infinity();
            for (double v : sims) m = std::max(m, v);
            double z = 0.0;
            for (double v : sims) z += std::exp(v - m);
            double h = 0.0;
            for (double v : sims) {
                const double p = std::exp(v - m) / z;
                if (p > 0.0) h -= p * std::log(p);
            }
            total += h;
        }
    }
    return total / n;
}

double dev_estimate(std::span<const double> weights, std::span<const double> loss01) {
    if (weights.size() != loss01.size() || weights.empty())
        throw ConfigError("dev_estimate: size mismatch");
    const double n = static_cast<double>(weights.size());
    double mean_l = 0.0, mean_w = 0.0;
    std::vector<double> big_l(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        big_l[i] = weights[i] * loss01[i];
        mean_l += big_l[i];
        mean_w += weights[i];
    }
    mean_l /= n;
    mean_w /= n;
    double cov = 0.0, var = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        cov += (big_l[i] - mean_l) * (weights[i] - mean_w);
        var += (weights[i] - mean_w) * (weights[i] - mean_w);
    }
    cov /= n;
    var /= n;
    const double eta = var < Numerics::var_floor ? 0.0 : -cov / var;
    return mean_l + eta * mean_w - eta;
}

double DomainDiscriminatorModel::margin(const double* x, int d) const {
    double s = bias;
    for (int j = 0; j < d; ++j) s += w[static_cast<std::size_t>(j)] * x[j];
    return s;
}

double DomainDiscriminatorModel::prob_target(const double* x, int d) const {
    const double m = margin(x, d);
    const double p = m >= 0.0 ? 1.0 / (1.0 + std::exp(-m)) : std::exp(m) / (1.0 + std::exp(m));
    return std::min(std::max(p, Numerics::prob_floor), 1.0 - Numerics::prob_floor);
}

DomainDiscriminatorModel train_domain_discriminator(const Tensor& src_feats,
                                                    const Tensor& tgt_feats,
                                                    std::uint64_t seed, int max_pool,
                                                    int max_iters) {
    if (src_feats.rows == 0 || tgt_feats.rows == 0)
        throw ConfigError("domain discriminator: need samples from both domains");
    if (src_feats.cols != tgt_feats.cols)
        throw ConfigError("domain discriminator: feature dims differ");
    const int d = src_feats.cols;
    Rng rng(seed);

    // pool up to max_pool embeddings per domain, then an 80/20 split per domain
    auto pool_indices = [&](int n) {
        std::vector<int> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        if (static_cast<int>(idx.size()) > max_pool) idx.resize(static_cast<std::size_t>(max_pool));
        return idx;
    };
    const auto src_idx = pool_indices(src_feats.rows);
    const auto tgt_idx = pool_indices(tgt_feats.rows);

    struct Sample {
        const double* x;
        double y; // -1 source, +1 target
    };
    std::vector<Sample> train, test;
    auto add = [&](const Tensor& feats, const std::vector<int>& idx, double y) {
        const std::size_t ntrain = (idx.size() * 8) / 10;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const Sample s{&feats.data[static_cast<std::size_t>(idx[i]) * feats.cols], y};
            (i < ntrain ? train : test).push_back(s);
        }
    };
    add(src_feats, src_idx, -1.0);
    add(tgt_feats, tgt_idx, +1.0);
    if (test.empty() || train.empty())
        throw ConfigError("domain discriminator: split produced an empty side");

    // 5 decay values evenly log-spaced between 1e-2 and 1e4
    std::vector<double> decays;
    for (int k = 0; k < 5; ++k) decays.push_back(std::pow(10.0, -2.0 + 1.5 * k));

    DomainDiscriminatorModel best;
    best.test_accuracy = -1.0;
    const int batch = 32;
    for (double decay : decays) {
        std::vector<double> w(static_cast<std::size_t>(d), 0.0);
        double bias = 0.0;
        Rng sgd_rng(Rng::mix(seed, static_cast<std::uint64_t>(decay * 1e6)));
        for (int t = 1; t <= max_iters; ++t) {
            const double eta = 1.0 / (decay * t);
            double gb = 0.0;
            std::vector<double> gw(static_cast<std::size_t>(d), 0.0);
            for (int b = 0; b < batch; ++b) {
                const Sample& s = train[static_cast<std::size_t>(sgd_rng.uniform_int(
                    static_cast<int>(train.size())))];
                double m = bias;
                for (int j = 0; j < d; ++j) m += w[static_cast<std::size_t>(j)] * s.x[j];
                if (s.y * m < 1.0) {
                    for (int j = 0; j < d; ++j) gw[static_cast<std::size_t>(j)] += s.y * s.x[j];
                    gb += s.y;
                }
            }
            const double shrink = std::max(0.0, 1.0 - eta * decay);
            for (int j = 0; j < d; ++j)
                w[static_cast<std::size_t>(j)] =
                    shrink * w[static_cast<std::size_t>(j)] + eta * gw[static_cast<std::size_t>(j)] / batch;
            bias += eta * gb / batch;
        }

        int correct = 0;
        for (const Sample& s : test) {
            double m = bias;
            for (int j = 0; j < d; ++j) m += w[static_cast<std::size_t>(j)] * s.x[j];
            if ((m > 0.0 ? 1.0 : -1.0) == s.y) ++correct;
        }
        const double acc = static_cast<double>(correct) / static_cast<double>(test.size());
        if (acc > best.test_accuracy) {
            best.w = w;
            best.bias = bias;
            best.decay = decay;
            best.test_accuracy = acc;
        }
    }
    return best;
}

double score_dev(const DomainDiscriminatorModel& disc, const Tensor& src_val_feats,
                 const Tensor& src_val_logits, const std::vector<int>& src_val_labels,
                 double ns_over_nt) {
    const int n = src_val_feats.rows;
    if (n == 0) throw ConfigError("score_dev: empty validation set");
    std::vector<double> w(static_cast<std::size_t>(n));
    std::vector<double> loss(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double di = disc.prob_target(
            &src_val_feats.data[static_cast<std::size_t>(i) * src_val_feats.cols],
            src_val_feats.cols);
        w[static_cast<std::size_t>(i)] = ns_over_nt * di / (1.0 - di);
        loss[static_cast<std::size_t>(i)] =
            argmax_row(src_val_logits, i) == src_val_labels[static_cast<std::size_t>(i)] ? 0.0
                                                                                         : 1.0;
    }
    return dev_estimate(w, loss);
}

double score_s_acc(const ModelBundle& bundle, const LabeledSet& src_val) {
    return accuracy(infer_logits(bundle, src_val.features), src_val.labels);
}

double score_ent(const ModelBundle& bundle, const LabeledSet& target) {
    return mean_prediction_entropy(infer_logits(bundle, target.features));
}

double score_snd(const ModelBundle& bundle, const LabeledSet& target, double temperature) {
    return snd_score(infer_features(bundle, target.features), temperature);
}

double score_labeled_subset(const ModelBundle& bundle, const LabeledSet& target,
                            const std::vector<int>& subset) {
    return accuracy_on_subset(infer_logits(bundle, target.features), target.labels, subset);
}

int select_checkpoint(const RunRecord& record, ScorerKind kind) {
    if (record.checkpoints.empty()) throw ConfigError("select_checkpoint: no checkpoints");
    const std::string name = scorer_name(kind);
    const bool hib = higher_is_better(kind);
    int best_iter = -1;
    double best = 0.0;
    for (const CheckpointScore& c : record.checkpoints) {
        const auto it = c.scores.find(name);
        if (it == c.scores.end())
            throw ConfigError("select_checkpoint: scorer '" + name + "' missing at iteration " +
                              std::to_string(c.iteration));
        const double v = it->second;
        if (best_iter < 0 || (hib ? v > best : v < best)) {
            best_iter = c.iteration;
            best = v;
        }
    }
    return best_iter;
}

bool subject_to_source_acc_filter(const std::string& method) {
    return method == "jumbot" || method == "mpot" || method == "ba3us";
}

const RunRecord& select_hyperparams(const std::vector<RunRecord>& final_records,
                                    ScorerKind kind, double source_acc_floor) {
    if (final_records.empty()) throw ConfigError("select_hyperparams: no records");
    const std::string name = scorer_name(kind);
    const bool hib = higher_is_better(kind);

    const RunRecord* best = nullptr;
    for (const RunRecord& r : final_records) {
        if (!r.ok()) continue;
        if (subject_to_source_acc_filter(r.method) &&
            r.final_src_val_acc() < source_acc_floor)
            continue;
        const auto it = r.final_checkpoint().scores.find(name);
        if (it == r.final_checkpoint().scores.end())
            throw ConfigError("select_hyperparams: scorer '" + name + "' missing");
        if (!best) {
            best = &r;
            continue;
        }
        const double v = it->second;
        const double bv = best->final_checkpoint().scores.at(name);
        if (hib ? v > bv : v < bv) {
            best = &r;
        } else if (v == bv && r.hp_key() < best->hp_key()) {
            best = &r;
        }
    }
    if (!best)
        throw ConfigError(
            "select_hyperparams: every run was filtered by the source-accuracy floor; "
            "expand the grid or lower the floor");
    return *best;
}

} // namespace pdabench
