#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace pdabench {

struct CheckpointScore {
    int iteration = 0;
    std::map<std::string, double> scores; // scorer name -> value
    double target_acc = 0.0;              // oracle bookkeeping
    double src_val_acc = 0.0;
};

// One training run: the unit of grid search and aggregation. Serialised as
// JSON lines, one row per checkpoint plus a summary row.
struct RunRecord {
    std::string method;
    std::map<std::string, double> hp;
    std::uint64_t seed = 0;
    std::string task_id;
    std::string status = "ok"; // ok | failed
    double wall_time_sec = 0.0;
    std::vector<CheckpointScore> checkpoints;

    bool ok() const { return status == "ok"; }
    const CheckpointScore& final_checkpoint() const;
    double final_target_acc() const { return final_checkpoint().target_acc; }
    double final_src_val_acc() const { return final_checkpoint().src_val_acc; }

    // Canonical "k=v,k=v" string; stable across platforms, used for file
    // names, resumability and per-run rng derivation.
    std::string hp_key() const;
};

std::string format_hp_value(double v);

void write_run_jsonl(std::ostream& os, const RunRecord& record);
RunRecord read_run_jsonl(std::istream& is);

void save_run(const std::string& path, const RunRecord& record);
RunRecord load_run(const std::string& path);

// All *.jsonl runs in a directory, sorted by file name.
std::vector<RunRecord> load_runs_dir(const std::string& dir);

} // namespace pdabench
