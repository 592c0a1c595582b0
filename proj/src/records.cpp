#include "pdabench/records.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pdabench/errors.hpp"

namespace pdabench {

using nlohmann::json;

const CheckpointScore& RunRecord::final_checkpoint() const {
    if (checkpoints.empty()) throw UsageError("run record has no checkpoints");
    return checkpoints.back();
}

std::string format_hp_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::string RunRecord::hp_key() const {
    std::string out;
    for (const auto& [k, v] : hp) {
        if (!out.empty()) out += ",";
        out += k + "=" + format_hp_value(v);
    }
    return out;
}

void write_run_jsonl(std::ostream& os, const RunRecord& record) {
    for (const CheckpointScore& c : record.checkpoints) {
        json row;
        row["row"] = "checkpoint";
        row["method"] = record.method;
        row["hp"] = record.hp;
        row["seed"] = record.seed;
        row["task"] = record.task_id;
        row["iter"] = c.iteration;
        row["scores"] = c.scores;
        row["target_acc"] = c.target_acc;
        row["src_val_acc"] = c.src_val_acc;
        os << row.dump() << "\n";
    }
    json summary;
    summary["row"] = "summary";
    summary["method"] = record.method;
    summary["hp"] = record.hp;
    summary["seed"] = record.seed;
    summary["task"] = record.task_id;
    summary["status"] = record.status;
    summary["wall_time_sec"] = record.wall_time_sec;
    summary["checkpoints"] = record.checkpoints.size();
    os << summary.dump() << "\n";
}

RunRecord read_run_jsonl(std::istream& is) {
    RunRecord record;
    bool have_summary = false;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json row;
        try {
            row = json::parse(line);
        } catch (const json::exception& e) {
            throw FormatError(std::string("run record: bad json row: ") + e.what());
        }
        const std::string kind = row.value("row", "");
        if (kind == "checkpoint") {
            CheckpointScore c;
            c.iteration = row.at("iter").get<int>();
            c.scores = row.at("scores").get<std::map<std::string, double>>();
            c.target_acc = row.at("target_acc").get<double>();
            c.src_val_acc = row.at("src_val_acc").get<double>();
            record.checkpoints.push_back(std::move(c));
            record.method = row.at("method").get<std::string>();
            record.hp = row.at("hp").get<std::map<std::string, double>>();
            record.seed = row.at("seed").get<std::uint64_t>();
            record.task_id = row.at("task").get<std::string>();
        } else if (kind == "summary") {
            record.method = row.at("method").get<std::string>();
            record.hp = row.at("hp").get<std::map<std::string, double>>();
            record.seed = row.at("seed").get<std::uint64_t>();
            record.task_id = row.at("task").get<std::string>();
            record.status = row.at("status").get<std::string>();
            record.wall_time_sec = row.value("wall_time_sec", 0.0);
            have_summary = true;
        } else {
            throw FormatError("run record: unknown row kind '" + kind + "'");
        }
    }
    if (!have_summary) throw FormatError("run record: missing summary row (incomplete run)");
    return record;
}

void save_run(const std::string& path, const RunRecord& record) {
    std::ofstream os(path);
    if (!os) throw FormatError("run record: cannot open " + path + " for writing");
    write_run_jsonl(os, record);
}

RunRecord load_run(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("run record: cannot open " + path);
    return read_run_jsonl(is);
}

std::vector<RunRecord> load_runs_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
            paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    std::vector<RunRecord> out;
    out.reserve(paths.size());
    for (const std::string& p : paths) out.push_back(load_run(p));
    return out;
}

} // namespace pdabench
