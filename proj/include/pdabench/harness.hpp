#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pdabench/data.hpp"
#include "pdabench/methods.hpp"
#include "pdabench/records.hpp"
#include "pdabench/selection.hpp"

namespace pdabench {

// --- datasets ---------------------------------------------------------------

// A prepared task: generated (or ingested) domains, the 80/20 source split,
// and the persisted labeled subsets shared by every run on the task.
struct Dataset {
    std::string task_id;
    std::uint64_t seed = 0;
    LabeledSet source;
    LabeledSet target;
    SplitIndices split;
    LabeledSet src_train;
    LabeledSet src_val;
    std::map<std::string, std::vector<int>> subsets;

    TrainData views() const;
};

PartialShiftSpec default_synthetic_task();    // 10 -> 6 classes
PartialShiftSpec wide_synthetic_task();       // 25 -> 10 classes

Dataset make_synthetic_dataset(const PartialShiftSpec& spec, std::uint64_t seed,
                               const std::string& task_id);
Dataset make_dataset_from_embeddings(const std::string& source_path,
                                     const std::string& target_path, std::uint64_t seed,
                                     const std::string& task_id);
void save_dataset(const std::string& dir, const Dataset& dataset);
Dataset load_dataset(const std::string& dir);

// --- defaults ----------------------------------------------------------------

// Hyper-parameter value lists searched for each method (the benchmark grids).
std::map<std::string, std::vector<double>> grid_values(const std::string& method);

// Desk-scale defaults used when no grid search is run.
MethodConfig default_method_config(const std::string& method);

// Batch regime per method: stratified batches for the OT methods, uniform
// sampling for the rest.
TrainConfig default_train_config(const MethodConfig& method, std::uint64_t seed);

std::vector<std::uint64_t> default_seeds(); // {2020, 2021, 2022}

// --- grid search ---------------------------------------------------------------

struct GridSpec {
    std::string method;
    std::map<std::string, std::vector<double>> values;
    std::string task_id;
    std::vector<ScorerKind> scorers = all_scorers();
};

GridSpec default_grid(const std::string& method, const std::string& task_id);
GridSpec load_grid_spec(const std::string& path);
void save_grid_spec(const std::string& path, const GridSpec& spec);

// Cartesian product in deterministic (hp-key sorted) order.
std::vector<std::map<std::string, double>> grid_points(const GridSpec& spec);

// One run per grid point on the tuning task, single seed. Each run's rng seed
// is derived from (tuning_seed, hp-key) so worker scheduling cannot change
// results. Completed points found in out_dir are loaded, not re-run.
std::vector<RunRecord> run_grid(const GridSpec& spec, const Dataset& dataset,
                                std::uint64_t tuning_seed, const TrainConfig& base,
                                const std::string& out_dir, int workers = 1);

// 0.9 x the final source validation accuracy of the source-only runs found in
// the records (the run-filtering heuristic floor). Returns 0 with a warning
// when no source-only record exists.
double source_accuracy_floor(const std::vector<RunRecord>& records);

// --- multi-seed evaluation -----------------------------------------------------

// Trains the chosen configuration once per seed; records are persisted to
// out_dir when non-empty.
std::vector<RunRecord> evaluate_selected(const MethodConfig& method, const TrainConfig& base,
                                         const Dataset& dataset,
                                         std::span<const std::uint64_t> seeds,
                                         const std::vector<ScorerKind>& scorers,
                                         const std::string& out_dir = "");

// --- reporting -------------------------------------------------------------------

struct ReportRow {
    std::string task_id;
    std::string method;
    std::string scorer;
    double mean_acc = 0.0;
    double std_acc = 0.0; // population convention
    int n_seeds = 0;
    bool has_failure = false;
};

// Per (task, method, scorer): accuracy of the scorer-selected checkpoint,
// aggregated over seeds.
std::vector<ReportRow> aggregate_records(const std::vector<RunRecord>& records);

// CSV (machine) + markdown (human) + the worst/best-without-target-labels
// summary. Byte-identical across replays of the same records.
void emit_report(const std::vector<RunRecord>& records, const std::string& out_dir);

std::vector<ReportRow> load_report_csv(const std::string& path);

} // namespace pdabench
