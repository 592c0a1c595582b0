#include "pdabench/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <cctype>
#include <thread>

#include <json.hpp>

#include "pdabench/errors.hpp"
#include "pdabench/rng.hpp"

namespace pdabench {

namespace fs = std::filesystem;
using nlohmann::json;

TrainData Dataset::views() const {
    TrainData d;
    d.src_train = &src_train;
    d.src_val = &src_val;
    d.target = &target;
    d.subsets = &subsets;
    return d;
}

PartialShiftSpec default_synthetic_task() {
    PartialShiftSpec spec; // 10 -> 6 with a recoverable rotation + shift
    spec.d = 16;
    spec.k_source = 10;
    spec.k_target = 6;
    spec.n_per_class_source = 60;
    spec.n_per_class_target = 50;
    spec.rotation = 0.5;
    spec.translation = 1.0;
    spec.class_jitter = 0.2;
    spec.noise_sigma = 0.45;
    spec.warp = 0.0;
    return spec;
}

PartialShiftSpec wide_synthetic_task() {
    PartialShiftSpec spec;
    spec.d = 24;
    spec.k_source = 25;
    spec.k_target = 10;
    spec.n_per_class_source = 30;
    spec.n_per_class_target = 25;
    spec.rotation = 0.4;
    spec.translation = 1.0;
    spec.class_jitter = 0.15;
    spec.noise_sigma = 0.5;
    return spec;
}

namespace {

std::map<std::string, std::vector<int>> make_subsets(const LabeledSet& target,
                                                     std::uint64_t seed) {
    std::map<std::string, std::vector<int>> subsets;
    subsets["one_shot"] = pick_labeled_subset(target, SubsetMode::OneShot, 0, Rng::mix(seed, 1));
    const int n = target.n();
    subsets["rnd_50"] =
        pick_labeled_subset(target, SubsetMode::RndK, std::min(50, n), Rng::mix(seed, 2));
    subsets["rnd_100"] =
        pick_labeled_subset(target, SubsetMode::RndK, std::min(100, n), Rng::mix(seed, 3));
    return subsets;
}

} // namespace

Dataset make_synthetic_dataset(const PartialShiftSpec& spec, std::uint64_t seed,
                               const std::string& task_id) {
    Dataset ds;
    ds.task_id = task_id;
    ds.seed = seed;
    auto [src, tgt] = gen_partial_blobs(spec, seed);
    ds.source = std::move(src);
    ds.target = std::move(tgt);
    ds.split = split_source(ds.source, 0.8, Rng::mix(seed, 0x5917));
    ds.src_train = subset_of(ds.source, ds.split.train);
    ds.src_val = subset_of(ds.source, ds.split.val);
    ds.subsets = make_subsets(ds.target, seed);
    return ds;
}

Dataset make_dataset_from_embeddings(const std::string& source_path,
                                     const std::string& target_path, std::uint64_t seed,
                                     const std::string& task_id) {
    Dataset ds;
    ds.task_id = task_id;
    ds.seed = seed;
    ds.source = load_embeddings(source_path);
    ds.source.domain = Domain::Source;
    ds.target = load_embeddings(target_path);
    ds.target.domain = Domain::Target;
    if (ds.source.dim() != ds.target.dim())
        throw ConfigError("dataset: source/target feature dims differ");
    if (ds.target.k_universe != ds.source.k_universe)
        throw ConfigError("dataset: class universes differ");
    ds.split = split_source(ds.source, 0.8, Rng::mix(seed, 0x5917));
    ds.src_train = subset_of(ds.source, ds.split.train);
    ds.src_val = subset_of(ds.source, ds.split.val);
    ds.subsets = make_subsets(ds.target, seed);
    return ds;
}

void save_dataset(const std::string& dir, const Dataset& dataset) {
    fs::create_directories(dir);
    EmbeddingManifest src_manifest{"source", {}, "task " + dataset.task_id};
    EmbeddingManifest tgt_manifest{"target", {}, "task " + dataset.task_id};
    save_embeddings(dir + "/source.pdae", dataset.source, src_manifest);
    save_embeddings(dir + "/target.pdae", dataset.target, tgt_manifest);

    json j;
    j["task_id"] = dataset.task_id;
    j["seed"] = dataset.seed;
    j["split"] = {{"train", dataset.split.train}, {"val", dataset.split.val}};
    j["subsets"] = dataset.subsets;
    std::ofstream os(dir + "/dataset.json");
    if (!os) throw FormatError("dataset: cannot write " + dir + "/dataset.json");
    os << j.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream is(dir + "/dataset.json");
    if (!is) throw FormatError("dataset: missing " + dir + "/dataset.json");
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw FormatError(std::string("dataset: bad dataset.json: ") + e.what());
    }
    Dataset ds;
    ds.task_id = j.at("task_id").get<std::string>();
    ds.seed = j.at("seed").get<std::uint64_t>();
    ds.source = load_embeddings(dir + "/source.pdae");
    ds.source.domain = Domain::Source;
    ds.target = load_embeddings(dir + "/target.pdae");
    ds.target.domain = Domain::Target;
    ds.split.train = j.at("split").at("train").get<std::vector<int>>();
    ds.split.val = j.at("split").at("val").get<std::vector<int>>();
    ds.subsets = j.at("subsets").get<std::map<std::string, std::vector<int>>>();
    ds.src_train = subset_of(ds.source, ds.split.train);
    ds.src_val = subset_of(ds.source, ds.split.val);
    return ds;
}

std::map<std::string, std::vector<double>> grid_values(const std::string& method) {
    if (method == "source_only") return {};
    if (method == "pada") return {{"lambda", {0.1, 0.5, 1.0, 5.0, 10.0}}};
    if (method == "safn")
        return {{"lambda", {0.005, 0.01, 0.05, 0.1, 0.5}}, {"delta_r", {0.01, 0.1, 1.0}}};
    if (method == "ba3us")
        return {{"lambda_wce", {0.1, 0.5, 1.0, 5.0, 10.0}},
                {"lambda_ent", {0.01, 0.05, 0.1, 0.5, 1.0}}};
    if (method == "ar")
        return {{"rho0", {2.5, 5.0, 7.5, 10.0}},
                {"a_up", {5.0, 10.0}},
                {"lambda_ent", {0.01, 0.1, 1.0}}};
    if (method == "jumbot")
        return {{"tau", {0.001, 0.01, 0.1}},
                {"eta1", {0.00001, 0.0001, 0.001, 0.01, 0.1}},
                {"eta2", {0.1, 0.5, 1.0}},
                {"eta3", {5.0, 10.0, 20.0}}};
    if (method == "mpot")
        return {{"eps", {0.5, 1.0, 1.5}},
                {"eta1", {0.0001, 0.001, 0.01, 0.1, 1.0}},
                {"eta2", {0.1, 1.0, 5.0, 10.0}},
                {"m", {0.1, 0.2, 0.3, 0.4}}};
    throw ConfigError("grid_values: unknown method '" + method + "'");
}

MethodConfig default_method_config(const std::string& method) {
    if (method == "source_only") return SourceOnlyCfg{};
    if (method == "pada") return PadaCfg{0.5};
    if (method == "safn") return SafnCfg{0.05, 1.0};
    if (method == "ba3us") return Ba3usCfg{1.0, 0.1};
    if (method == "ar") return ArCfg{2.5, 5.0, -5.0, 0.1};
    if (method == "jumbot") return JumbotCfg{0.05, 0.01, 0.5, 10.0};
    if (method == "mpot") return MpotCfg{0.1, 0.01, 1.0, 0.5};
    throw ConfigError("default_method_config: unknown method '" + method + "'");
}

TrainConfig default_train_config(const MethodConfig& method, std::uint64_t seed) {
    TrainConfig tc;
    tc.seed = seed;
    tc.total_iters = 3000;
    tc.eval_interval = 500;
    tc.batch_size = uses_stratified_batches(method) ? 65 : 36;
    if (std::holds_alternative<SourceOnlyCfg>(method)) tc.total_iters = 1000;
    return tc;
}

std::vector<std::uint64_t> default_seeds() { return {2020, 2021, 2022}; }

GridSpec default_grid(const std::string& method, const std::string& task_id) {
    GridSpec spec;
    spec.method = method;
    spec.values = grid_values(method);
    spec.task_id = task_id;
    return spec;
}

GridSpec load_grid_spec(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("grid spec: cannot open " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw FormatError(std::string("grid spec: bad json: ") + e.what());
    }
    GridSpec spec;
    spec.method = j.at("method").get<std::string>();
    spec.task_id = j.value("task_id", "task");
    if (j.contains("values"))
        spec.values = j.at("values").get<std::map<std::string, std::vector<double>>>();
    else
        spec.values = grid_values(spec.method);
    if (j.contains("scorers")) {
        spec.scorers.clear();
        for (const auto& s : j.at("scorers")) spec.scorers.push_back(scorer_from_name(s));
    }
    return spec;
}

void save_grid_spec(const std::string& path, const GridSpec& spec) {
    json j;
    j["method"] = spec.method;
    j["task_id"] = spec.task_id;
    j["values"] = spec.values;
    std::vector<std::string> names;
    for (ScorerKind k : spec.scorers) names.push_back(scorer_name(k));
    j["scorers"] = names;
    std::ofstream os(path);
    if (!os) throw FormatError("grid spec: cannot write " + path);
    os << j.dump(2) << "\n";
}

std::vector<std::map<std::string, double>> grid_points(const GridSpec& spec) {
    std::vector<std::map<std::string, double>> points{{}};
    for (const auto& [key, vals] : spec.values) {
        if (vals.empty()) throw ConfigError("grid: empty value list for " + key);
        std::vector<std::map<std::string, double>> next;
        next.reserve(points.size() * vals.size());
        for (const auto& p : points)
            for (double v : vals) {
                auto q = p;
                q[key] = v;
                next.push_back(std::move(q));
            }
        points = std::move(next);
    }
    // ar: a_low is tied to a_up, not a free axis
    if (spec.method == "ar")
        for (auto& p : points) p["a_low"] = -p.at("a_up");
    std::sort(points.begin(), points.end());
    return points;
}

namespace {

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s)
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
    return out;
}

std::string run_file_name(const std::string& method, const std::map<std::string, double>& hp,
                          std::uint64_t seed) {
    RunRecord probe;
    probe.method = method;
    probe.hp = hp;
    std::string key = probe.hp_key();
    if (key.empty()) key = "default";
    return sanitize(method) + "__" + sanitize(key) + "__seed" + std::to_string(seed) + ".jsonl";
}

} // namespace

std::vector<RunRecord> run_grid(const GridSpec& spec, const Dataset& dataset,
                                std::uint64_t tuning_seed, const TrainConfig& base,
                                const std::string& out_dir, int workers) {
    const auto points = grid_points(spec);
    fs::create_directories(out_dir);
    std::vector<RunRecord> results(points.size());
    std::atomic<std::size_t> cursor{0};
    std::mutex io_mutex;

    auto work = [&]() {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= points.size()) return;
            const auto& hp = points[i];
            RunRecord probe;
            probe.method = spec.method;
            probe.hp = hp;
            const std::string fname = run_file_name(spec.method, hp, tuning_seed);
            const std::string path = out_dir + "/" + fname;

            if (fs::exists(path)) {
                try {
                    results[i] = load_run(path);
                    continue; // resumable: completed point, skip
                } catch (const FormatError&) {
                    // partial file from an interrupted run: redo
                }
            }

            TrainConfig tc = base;
            tc.seed = Rng::mix(tuning_seed, Rng::hash_string(probe.hp_key()));
            RunRecord record;
            try {
                MethodConfig cfg = make_method_config(spec.method, hp);
                record = train_run(cfg, tc, dataset.views(), spec.scorers, dataset.task_id);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(io_mutex);
                std::cerr << "grid point " << probe.hp_key() << " failed: " << e.what() << "\n";
                record.method = spec.method;
                record.hp = hp;
                record.seed = tc.seed;
                record.task_id = dataset.task_id;
                record.status = "failed";
            }
            const std::string tmp = path + ".tmp";
            save_run(tmp, record);
            fs::rename(tmp, path);
            results[i] = std::move(record);
        }
    };

    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    return results;
}

double source_accuracy_floor(const std::vector<RunRecord>& records) {
    double best = -1.0;
    for (const RunRecord& r : records) {
        if (r.method != "source_only" || !r.ok() || r.checkpoints.empty()) continue;
        best = std::max(best, r.final_src_val_acc());
    }
    if (best < 0.0) {
        std::cerr << "source_accuracy_floor: no source-only record found; floor disabled\n";
        return 0.0;
    }
    return 0.9 * best;
}

std::vector<RunRecord> evaluate_selected(const MethodConfig& method, const TrainConfig& base,
                                         const Dataset& dataset,
                                         std::span<const std::uint64_t> seeds,
                                         const std::vector<ScorerKind>& scorers,
                                         const std::string& out_dir) {
    std::vector<RunRecord> out;
    for (std::uint64_t seed : seeds) {
        TrainConfig tc = base;
        tc.seed = seed;
        RunRecord record = train_run(method, tc, dataset.views(), scorers, dataset.task_id);
        if (!out_dir.empty()) {
            fs::create_directories(out_dir);
            save_run(out_dir + "/" + run_file_name(record.method, record.hp, seed), record);
        }
        out.push_back(std::move(record));
    }
    return out;
}

namespace {

struct Key {
    std::string task, method;
    bool operator<(const Key& o) const {
        return task != o.task ? task < o.task : method < o.method;
    }
};

} // namespace

std::vector<ReportRow> aggregate_records(const std::vector<RunRecord>& records) {
    if (records.empty()) throw ConfigError("aggregate_records: no records");

    std::map<Key, std::vector<const RunRecord*>> groups;
    for (const RunRecord& r : records) groups[{r.task_id, r.method}].push_back(&r);

    std::vector<ReportRow> rows;
    for (const auto& [key, runs] : groups) {
        bool failure = false;
        std::vector<const RunRecord*> ok_runs;
        for (const RunRecord* r : runs) {
            if (r->ok() && !r->checkpoints.empty())
                ok_runs.push_back(r);
            else
                failure = true;
        }
        if (ok_runs.empty()) {
            ReportRow row;
            row.task_id = key.task;
            row.method = key.method;
            row.scorer = "oracle";
            row.has_failure = true;
            rows.push_back(row);
            continue;
        }

        // scorers present at every checkpoint of every surviving run
        std::set<std::string> common;
        bool first = true;
        for (const RunRecord* r : ok_runs) {
            std::set<std::string> present;
            for (const auto& [name, v] : r->checkpoints.front().scores) present.insert(name);
            for (const CheckpointScore& c : r->checkpoints) {
                std::set<std::string> here;
                for (const auto& [name, v] : c.scores) here.insert(name);
                std::set<std::string> kept;
                std::set_intersection(present.begin(), present.end(), here.begin(), here.end(),
                                      std::inserter(kept, kept.begin()));
                present = std::move(kept);
            }
            if (first) {
                common = present;
                first = false;
            } else {
                std::set<std::string> kept;
                std::set_intersection(common.begin(), common.end(), present.begin(),
                                      present.end(), std::inserter(kept, kept.begin()));
                common = std::move(kept);
            }
        }

        for (const std::string& scorer : common) {
            ScorerKind kind;
            try {
                kind = scorer_from_name(scorer);
            } catch (const ConfigError&) {
                continue;
            }
            std::vector<double> accs;
            for (const RunRecord* r : ok_runs) {
                const int iter = select_checkpoint(*r, kind);
                for (const CheckpointScore& c : r->checkpoints)
                    if (c.iteration == iter) {
                        accs.push_back(c.target_acc);
                        break;
                    }
            }
            double mean = 0.0;
            for (double a : accs) mean += a;
            mean /= static_cast<double>(accs.size());
            double var = 0.0;
            for (double a : accs) var += (a - mean) * (a - mean);
            var /= static_cast<double>(accs.size()); // population convention

            ReportRow row;
            row.task_id = key.task;
            row.method = key.method;
            row.scorer = scorer;
            row.mean_acc = mean;
            row.std_acc = std::sqrt(var);
            row.n_seeds = static_cast<int>(accs.size());
            row.has_failure = failure;
            rows.push_back(row);
        }
    }
    return rows;
}

namespace {

const std::vector<std::string>& scorer_column_order() {
    static const std::vector<std::string> order{"s_acc",    "ent",    "dev",    "snd",
                                                "one_shot", "rnd_50", "rnd_100", "oracle"};
    return order;
}

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
    return buf;
}

} // namespace

void emit_report(const std::vector<RunRecord>& records, const std::string& out_dir) {
    const auto rows = aggregate_records(records);
    fs::create_directories(out_dir);

    // machine-readable CSV
    {
        std::ofstream os(out_dir + "/report.csv");
        if (!os) throw FormatError("report: cannot write report.csv");
        os << "task,method,scorer,mean_acc,std_acc,n_seeds,has_failure\n";
        for (const ReportRow& r : rows) {
            os << r.task_id << "," << r.method << "," << r.scorer << ","
               << format_hp_value(r.mean_acc) << "," << format_hp_value(r.std_acc) << ","
               << r.n_seeds << "," << (r.has_failure ? 1 : 0) << "\n";
        }
    }

    // markdown: methods as rows, scorers as columns, one table per task
    std::set<std::string> tasks;
    for (const ReportRow& r : rows) tasks.insert(r.task_id);

    std::ofstream md(out_dir + "/report.md");
    if (!md) throw FormatError("report: cannot write report.md");
    md << "# Benchmark report\n";
    for (const std::string& task : tasks) {
        std::set<std::string> methods;
        std::set<std::string> present_scorers;
        std::map<std::pair<std::string, std::string>, const ReportRow*> cells;
        for (const ReportRow& r : rows)
            if (r.task_id == task) {
                methods.insert(r.method);
                present_scorers.insert(r.scorer);
                cells[{r.method, r.scorer}] = &r;
            }
        std::vector<std::string> cols;
        for (const std::string& s : scorer_column_order())
            if (present_scorers.count(s)) cols.push_back(s);

        md << "\n## Task " << task << "\n\n";
        md << "| method |";
        for (const auto& c : cols) md << " " << c << " |";
        md << "\n|---|";
        for (std::size_t i = 0; i < cols.size(); ++i) md << "---|";
        md << "\n";
        for (const std::string& method : methods) {
            md << "| " << method << " |";
            for (const auto& c : cols) {
                const auto it = cells.find({method, c});
                if (it == cells.end()) {
                    md << " - |";
                } else {
                    md << " " << pct(it->second->mean_acc) << " +- " << pct(it->second->std_acc);
                    if (it->second->has_failure) md << " (!)";
                    md << " |";
                }
            }
            md << "\n";
        }

        // worst/best among the no-target-label strategies against the oracle
        md << "\n### Selection gap (task " << task << ")\n\n";
        md << "| method | worst w/o target labels | best w/o target labels | oracle |\n";
        md << "|---|---|---|---|\n";
        for (const std::string& method : methods) {
            double worst = 2.0, bestv = -1.0, oracle = -1.0;
            std::string worst_name, best_name;
            for (const auto& c : cols) {
                const auto it = cells.find({method, c});
                if (it == cells.end()) continue;
                ScorerKind kind = scorer_from_name(c);
                if (uses_target_labels(kind)) {
                    if (c == "oracle") oracle = it->second->mean_acc;
                    continue;
                }
                if (it->second->mean_acc < worst) {
                    worst = it->second->mean_acc;
                    worst_name = c;
                }
                if (it->second->mean_acc > bestv) {
                    bestv = it->second->mean_acc;
                    best_name = c;
                }
            }
            md << "| " << method << " | ";
            if (!worst_name.empty())
                md << pct(worst) << " (" << worst_name << ")";
            else
                md << "-";
            md << " | ";
            if (!best_name.empty())
                md << pct(bestv) << " (" << best_name << ")";
            else
                md << "-";
            md << " | ";
            if (oracle >= 0.0)
                md << pct(oracle);
            else
                md << "-";
            md << " |\n";
        }
    }
    md << "\nAccuracies are percentages; +- is the population standard deviation over the "
          "seed list.\n";
}

std::vector<ReportRow> load_report_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("report: cannot open " + path);
    std::string line;
    if (!std::getline(is, line) ||
        line != "task,method,scorer,mean_acc,std_acc,n_seeds,has_failure")
        throw FormatError("report: unexpected CSV header");
    std::vector<ReportRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        ReportRow r;
        std::getline(ss, r.task_id, ',');
        std::getline(ss, r.method, ',');
        std::getline(ss, r.scorer, ',');
        std::getline(ss, field, ',');
        r.mean_acc = std::stod(field);
        std::getline(ss, field, ',');
        r.std_acc = std::stod(field);
        std::getline(ss, field, ',');
        r.n_seeds = std::stoi(field);
        std::getline(ss, field, ',');
        r.has_failure = field == "1";
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace pdabench
