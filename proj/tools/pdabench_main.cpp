#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pdabench/errors.hpp"
#include "pdabench/harness.hpp"
#include "pdabench/nets.hpp"

namespace fs = std::filesystem;
using namespace pdabench;
using nlohmann::json;

namespace {

PartialShiftSpec spec_from_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("gen-data: cannot open spec file " + path);
    json j;
    is >> j;
    PartialShiftSpec spec = default_synthetic_task();
    spec.d = j.value("d", spec.d);
    spec.k_source = j.value("k_source", spec.k_source);
    spec.k_target = j.value("k_target", spec.k_target);
    spec.n_per_class_source = j.value("n_per_class_source", spec.n_per_class_source);
    spec.n_per_class_target = j.value("n_per_class_target", spec.n_per_class_target);
    spec.rotation = j.value("rotation", spec.rotation);
    spec.translation = j.value("translation", spec.translation);
    spec.class_jitter = j.value("class_jitter", spec.class_jitter);
    spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
    spec.warp = j.value("warp", spec.warp);
    spec.mean_scale = j.value("mean_scale", spec.mean_scale);
    return spec;
}

std::map<std::string, double> parse_hp(const std::vector<std::string>& kvs) {
    std::map<std::string, double> hp;
    for (const std::string& kv : kvs) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--hp expects key=value, got '" + kv + "'");
        hp[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
    }
    return hp;
}

std::vector<ScorerKind> parse_scorers(const std::string& csv) {
    if (csv.empty() || csv == "all") return all_scorers();
    std::vector<ScorerKind> out;
    std::size_t pos = 0;
    while (pos <= csv.size()) {
        const auto comma = csv.find(',', pos);
        const std::string name =
            csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (!name.empty()) out.push_back(scorer_from_name(name));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

Dataset dataset_from_flags(const std::string& dataset_dir, const std::string& embeddings_dir,
                           std::uint64_t seed, const std::string& task) {
    if (!dataset_dir.empty()) return load_dataset(dataset_dir);
    if (!embeddings_dir.empty())
        return make_dataset_from_embeddings(embeddings_dir + "/source.pdae",
                                            embeddings_dir + "/target.pdae", seed, task);
    throw ConfigError("either --dataset or --embeddings is required");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"partial domain adaptation benchmark"};
    app.require_subcommand(1);

    // ---- gen-data ----
    auto* gen = app.add_subcommand("gen-data", "generate or ingest a dataset directory");
    std::string gen_spec, gen_out, gen_embeddings, gen_preset = "default", gen_task = "synth";
    std::uint64_t gen_seed = 2020;
    gen->add_option("--spec", gen_spec, "synthetic task spec (json)");
    gen->add_option("--preset", gen_preset, "default (10->6) or wide (25->10)");
    gen->add_option("--task", gen_task, "task id");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--embeddings", gen_embeddings,
                    "directory with source.pdae/target.pdae to ingest instead of generating");
    gen->add_option("--out-dir", gen_out, "output dataset directory")->required();

    // ---- train ----
    auto* train = app.add_subcommand("train", "train one method, one or more seeds");
    std::string tr_dataset, tr_embeddings, tr_method = "source_only", tr_out, tr_scorers = "all";
    std::string tr_ckpt;
    std::vector<std::string> tr_hp;
    std::uint64_t tr_seed = 2020;
    std::vector<std::uint64_t> tr_seeds;
    int tr_iters = -1, tr_eval = -1, tr_batch = -1;
    train->add_option("--dataset", tr_dataset, "dataset directory (from gen-data)");
    train->add_option("--embeddings", tr_embeddings, "embeddings directory to substitute");
    train->add_option("--method", tr_method, "method name")->required();
    train->add_option("--hp", tr_hp, "hyper-parameter key=value (repeatable)");
    train->add_option("--seed", tr_seed, "single seed");
    train->add_option("--seeds", tr_seeds, "seed list (overrides --seed)");
    train->add_option("--iters", tr_iters, "total iterations");
    train->add_option("--eval-interval", tr_eval, "checkpoint cadence");
    train->add_option("--batch-size", tr_batch, "mini-batch size");
    train->add_option("--scorers", tr_scorers, "comma list or 'all'");
    train->add_option("--save-checkpoint", tr_ckpt, "write the final model to this path");
    train->add_option("--out-dir", tr_out, "record output directory");

    // ---- grid-search ----
    auto* grid = app.add_subcommand("grid-search", "run a hyper-parameter grid");
    std::string gr_dataset, gr_embeddings, gr_grid, gr_method, gr_out, gr_scorers = "all";
    std::uint64_t gr_seed = 2020;
    int gr_workers = 1, gr_iters = -1, gr_eval = -1;
    grid->add_option("--dataset", gr_dataset, "dataset directory");
    grid->add_option("--embeddings", gr_embeddings, "embeddings directory to substitute");
    grid->add_option("--grid", gr_grid, "grid spec json (default: the method's benchmark grid)");
    grid->add_option("--method", gr_method, "method name (when no --grid)");
    grid->add_option("--seed", gr_seed, "tuning seed");
    grid->add_option("--workers", gr_workers, "parallel workers");
    grid->add_option("--iters", gr_iters, "total iterations per run");
    grid->add_option("--eval-interval", gr_eval, "checkpoint cadence");
    grid->add_option("--scorers", gr_scorers, "comma list or 'all'");
    grid->add_option("--out-dir", gr_out, "record output directory")->required();

    // ---- select ----
    auto* sel = app.add_subcommand("select", "pick hyper-parameters / checkpoints from records");
    std::string se_records, se_scorer = "oracle", se_out;
    double se_floor = -1.0;
    sel->add_option("--records", se_records, "records directory")->required();
    sel->add_option("--scorer", se_scorer, "selection scorer");
    sel->add_option("--floor", se_floor,
                    "source-accuracy floor override (default: 0.9 x source-only)");
    sel->add_option("--out-dir", se_out, "write selected.json here (stdout otherwise)");

    // ---- report ----
    auto* rep = app.add_subcommand("report", "aggregate records into CSV + markdown tables");
    std::string re_records, re_out;
    rep->add_option("--records", re_records, "records directory")->required();
    rep->add_option("--out-dir", re_out, "report output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            Dataset ds;
            if (!gen_embeddings.empty()) {
                ds = make_dataset_from_embeddings(gen_embeddings + "/source.pdae",
                                                  gen_embeddings + "/target.pdae", gen_seed,
                                                  gen_task);
            } else {
                PartialShiftSpec spec;
                if (!gen_spec.empty())
                    spec = spec_from_json(gen_spec);
                else if (gen_preset == "wide")
                    spec = wide_synthetic_task();
                else
                    spec = default_synthetic_task();
                ds = make_synthetic_dataset(spec, gen_seed, gen_task);
            }
            save_dataset(gen_out, ds);
            std::cout << "dataset '" << ds.task_id << "': " << ds.source.n() << " source / "
                      << ds.target.n() << " target samples, " << ds.src_train.n()
                      << " train + " << ds.src_val.n() << " val -> " << gen_out << "\n";
        } else if (train->parsed()) {
            Dataset ds = dataset_from_flags(tr_dataset, tr_embeddings, tr_seed, "ingest");
            MethodConfig cfg = tr_hp.empty() ? default_method_config(tr_method)
                                             : make_method_config(tr_method, parse_hp(tr_hp));
            std::vector<std::uint64_t> seeds = tr_seeds.empty()
                                                   ? std::vector<std::uint64_t>{tr_seed}
                                                   : tr_seeds;
            for (std::uint64_t seed : seeds) {
                TrainConfig tc = default_train_config(cfg, seed);
                if (tr_iters > 0) tc.total_iters = tr_iters;
                if (tr_eval > 0) tc.eval_interval = tr_eval;
                if (tr_batch > 0) tc.batch_size = tr_batch;
                ModelBundle final_bundle;
                RunRecord record = train_run(cfg, tc, ds.views(), parse_scorers(tr_scorers),
                                             ds.task_id,
                                             tr_ckpt.empty() ? nullptr : &final_bundle);
                if (!tr_out.empty()) {
                    fs::create_directories(tr_out);
                    save_run(tr_out + "/" + record.method + "__" +
                                 (record.hp_key().empty() ? "default" : record.hp_key()) +
                                 "__seed" + std::to_string(seed) + ".jsonl",
                             record);
                }
                if (!tr_ckpt.empty()) {
                    std::map<std::string, std::string> sidecar{
                        {"method", record.method},
                        {"hp", record.hp_key()},
                        {"seed", std::to_string(seed)},
                        {"iteration", std::to_string(tc.total_iters)}};
                    save_checkpoint(tr_ckpt, final_bundle, sidecar);
                }
                std::cout << record.method << " seed " << seed << ": status=" << record.status
                          << " target_acc=" << record.final_target_acc()
                          << " src_val_acc=" << record.final_src_val_acc() << " ("
                          << record.wall_time_sec << "s)\n";
            }
        } else if (grid->parsed()) {
            Dataset ds = dataset_from_flags(gr_dataset, gr_embeddings, gr_seed, "ingest");
            GridSpec spec;
            if (!gr_grid.empty())
                spec = load_grid_spec(gr_grid);
            else if (!gr_method.empty())
                spec = default_grid(gr_method, ds.task_id);
            else
                throw ConfigError("grid-search needs --grid or --method");
            spec.task_id = ds.task_id;
            spec.scorers = parse_scorers(gr_scorers);
            MethodConfig probe = spec.method == "source_only"
                                     ? MethodConfig(SourceOnlyCfg{})
                                     : make_method_config(spec.method,
                                                          grid_points(spec).front());
            TrainConfig base = default_train_config(probe, gr_seed);
            if (gr_iters > 0) base.total_iters = gr_iters;
            if (gr_eval > 0) base.eval_interval = gr_eval;
            auto records = run_grid(spec, ds, gr_seed, base, gr_out, gr_workers);
            int ok = 0;
            for (const auto& r : records) ok += r.ok();
            std::cout << "grid '" << spec.method << "': " << records.size() << " points, "
                      << ok << " ok -> " << gr_out << "\n";
        } else if (sel->parsed()) {
            auto records = load_runs_dir(se_records);
            if (records.empty()) throw ConfigError("select: no records in " + se_records);
            const ScorerKind kind = scorer_from_name(se_scorer);
            const double floor = se_floor >= 0.0 ? se_floor : source_accuracy_floor(records);

            std::map<std::string, std::vector<RunRecord>> by_method;
            for (auto& r : records) by_method[r.method].push_back(r);

            json out;
            out["scorer"] = se_scorer;
            out["source_acc_floor"] = floor;
            for (const auto& [method, runs] : by_method) {
                const RunRecord& best = select_hyperparams(runs, kind, floor);
                json entry;
                entry["hp"] = best.hp;
                entry["hp_key"] = best.hp_key();
                entry["seed"] = best.seed;
                entry["checkpoint_iteration"] = select_checkpoint(best, kind);
                entry["final_scorer_value"] = best.final_checkpoint().scores.at(se_scorer);
                entry["final_target_acc"] = best.final_target_acc();
                out["methods"][method] = entry;
            }
            if (se_out.empty()) {
                std::cout << out.dump(2) << "\n";
            } else {
                fs::create_directories(se_out);
                std::ofstream os(se_out + "/selected.json");
                os << out.dump(2) << "\n";
                std::cout << "wrote " << se_out << "/selected.json\n";
            }
        } else if (rep->parsed()) {
            auto records = load_runs_dir(re_records);
            if (records.empty()) throw ConfigError("report: no records in " + re_records);
            emit_report(records, re_out);
            std::cout << "wrote " << re_out << "/report.csv and report.md\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
