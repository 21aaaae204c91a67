#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "wavehead/errors.hpp"
#include "wavehead/metrics.hpp"

namespace wavehead {

inline constexpr const char* kToolName = "wavehead";
inline constexpr int kReportSchemaVersion = 1;

// Shortest decimal form that round-trips; keeps emitted files deterministic.
inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

struct RunRecord {
    std::string variant;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;  // failure isolation: set instead of aborting the sweep
    CalibrationReport calib;
    std::size_t param_count = 0;
    double final_train_loss = 0.0;
    double train_seconds = 0.0;       // timing fields are excluded from
    double epoch_seconds_mean = 0.0;  // determinism comparisons
};

struct AggregateRow {
    std::string variant;
    std::size_t runs = 0;  // successful runs only
    double accuracy_mean = 0.0, accuracy_std = 0.0;
    double ece_mean = 0.0, ece_std = 0.0;
    double nll_mean = 0.0, nll_std = 0.0;
    double brier_mean = 0.0, brier_std = 0.0;
    std::optional<double> kl_mean, kl_std;
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
    if (xs.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    if (xs.size() < 2) return {mean, 0.0};
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size() - 1);
    return {mean, std::sqrt(var)};
}

} // namespace detail

inline std::vector<AggregateRow> aggregate_records(const std::vector<RunRecord>& records) {
    std::vector<std::string> order;
    for (const auto& r : records)
        if (std::find(order.begin(), order.end(), r.variant) == order.end())
            order.push_back(r.variant);

    std::vector<AggregateRow> rows;
    for (const auto& variant : order) {
        AggregateRow row;
        row.variant = variant;
        std::vector<double> acc, ece_v, nll_v, brier_v, kl_v;
        bool kl_complete = true;
        for (const auto& r : records) {
            if (r.variant != variant || !r.ok) continue;
            acc.push_back(r.calib.accuracy);
            ece_v.push_back(r.calib.ece);
            nll_v.push_back(r.calib.nll);
            brier_v.push_back(r.calib.brier);
            if (r.calib.kl_to_soft) kl_v.push_back(*r.calib.kl_to_soft);
            else kl_complete = false;
        }
        row.runs = acc.size();
        std::tie(row.accuracy_mean, row.accuracy_std) = detail::mean_std(acc);
        std::tie(row.ece_mean, row.ece_std) = detail::mean_std(ece_v);
        std::tie(row.nll_mean, row.nll_std) = detail::mean_std(nll_v);
        std::tie(row.brier_mean, row.brier_std) = detail::mean_std(brier_v);
        if (kl_complete && !kl_v.empty()) {
            auto [m, s] = detail::mean_std(kl_v);
            row.kl_mean = m;
            row.kl_std = s;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

struct EvaluationReport {
    nlohmann::ordered_json config_echo;
    std::string train_checksum;
    std::string test_checksum;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    std::size_t classes = 0;
    std::vector<RunRecord> records;
};

inline nlohmann::ordered_json bins_to_json(const ReliabilityBins& b) {
    return {{"bin_count", b.bin_count},
            {"total", b.total},
            {"counts", b.counts},
            {"mean_confidence", b.mean_confidence},
            {"mean_accuracy", b.mean_accuracy}};
}

inline ReliabilityBins bins_from_json(const nlohmann::json& j) {
    ReliabilityBins b;
    b.bin_count = j.at("bin_count").get<std::size_t>();
    b.total = j.at("total").get<std::size_t>();
    b.counts = j.at("counts").get<std::vector<std::size_t>>();
    b.mean_confidence = j.at("mean_confidence").get<std::vector<double>>();
    b.mean_accuracy = j.at("mean_accuracy").get<std::vector<double>>();
    return b;
}

inline nlohmann::ordered_json report_to_json(const EvaluationReport& report) {
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["tool"] = kToolName;
    j["kind"] = "ablation";
    j["config"] = report.config_echo;
    j["optimizer"] = {{"name", "adam"}, {"beta1", 0.9}, {"beta2", 0.999}, {"epsilon", 1e-8}};
    j["data"] = {{"train_checksum", report.train_checksum},
                 {"test_checksum", report.test_checksum},
                 {"train_size", report.train_size},
                 {"test_size", report.test_size},
                 {"classes", report.classes}};

    nlohmann::ordered_json records = nlohmann::ordered_json::array();
    for (const auto& r : report.records) {
        nlohmann::ordered_json rec;
        rec["variant"] = r.variant;
        rec["seed"] = r.seed;
        rec["ok"] = r.ok;
        if (!r.ok) rec["error"] = r.error;
        rec["accuracy"] = r.calib.accuracy;
        rec["ece"] = r.calib.ece;
        rec["nll"] = r.calib.nll;
        rec["brier"] = r.calib.brier;
        if (r.calib.kl_to_soft) rec["kl_to_soft"] = *r.calib.kl_to_soft;
        rec["param_count"] = r.param_count;
        rec["final_train_loss"] = r.final_train_loss;
        rec["train_seconds"] = r.train_seconds;
        rec["epoch_seconds_mean"] = r.epoch_seconds_mean;
        rec["reliability"] = bins_to_json(r.calib.bins);
        records.push_back(std::move(rec));
    }
    j["records"] = std::move(records);

    nlohmann::ordered_json aggregates = nlohmann::ordered_json::array();
    for (const auto& a : aggregate_records(report.records)) {
        nlohmann::ordered_json row;
        row["variant"] = a.variant;
        row["runs"] = a.runs;
        row["accuracy_mean"] = a.accuracy_mean;
        row["accuracy_std"] = a.accuracy_std;
        row["ece_mean"] = a.ece_mean;
        row["ece_std"] = a.ece_std;
        row["nll_mean"] = a.nll_mean;
        row["nll_std"] = a.nll_std;
        row["brier_mean"] = a.brier_mean;
        row["brier_std"] = a.brier_std;
        if (a.kl_mean) {
            row["kl_mean"] = *a.kl_mean;
            row["kl_std"] = *a.kl_std;
        }
        aggregates.push_back(std::move(row));
    }
    j["aggregates"] = std::move(aggregates);
    return j;
}

inline EvaluationReport report_from_json(const nlohmann::ordered_json& j) {
    try {
        if (j.at("tool").get<std::string>() != kToolName)
            throw io_error(io_error::kind::bad_magic, "report: not a wavehead report");
        if (j.at("schema_version").get<int>() != kReportSchemaVersion)
            throw io_error(io_error::kind::bad_version, "report: unsupported schema version");
        EvaluationReport report;
        report.config_echo = j.at("config");
        const auto& data = j.at("data");
        report.train_checksum = data.at("train_checksum").get<std::string>();
        report.test_checksum = data.at("test_checksum").get<std::string>();
        report.train_size = data.at("train_size").get<std::size_t>();
        report.test_size = data.at("test_size").get<std::size_t>();
        report.classes = data.at("classes").get<std::size_t>();
        for (const auto& rec : j.at("records")) {
            RunRecord r;
            r.variant = rec.at("variant").get<std::string>();
            r.seed = rec.at("seed").get<std::uint64_t>();
            r.ok = rec.at("ok").get<bool>();
            if (rec.contains("error")) r.error = rec["error"].get<std::string>();
            r.calib.accuracy = rec.at("accuracy").get<double>();
            r.calib.ece = rec.at("ece").get<double>();
            r.calib.nll = rec.at("nll").get<double>();
            r.calib.brier = rec.at("brier").get<double>();
            if (rec.contains("kl_to_soft")) r.calib.kl_to_soft = rec["kl_to_soft"].get<double>();
            r.param_count = rec.at("param_count").get<std::size_t>();
            r.final_train_loss = rec.at("final_train_loss").get<double>();
            r.train_seconds = rec.at("train_seconds").get<double>();
            r.epoch_seconds_mean = rec.at("epoch_seconds_mean").get<double>();
            r.calib.bins = bins_from_json(rec.at("reliability"));
            report.records.push_back(std::move(r));
        }
        return report;
    } catch (const nlohmann::json::exception& e) {
        throw io_error(io_error::kind::schema, std::string("report: malformed JSON: ") + e.what());
    }
}

// Removes every key containing "seconds", recursively. Reports with matching
// configs must be byte-identical after this pass.
inline void strip_timing_fields(nlohmann::ordered_json& j) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end();) {
            if (it.key().find("seconds") != std::string::npos) it = j.erase(it);
            else {
                strip_timing_fields(it.value());
                ++it;
            }
        }
    } else if (j.is_array()) {
        for (auto& item : j) strip_timing_fields(item);
    }
}

namespace detail {

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error(io_error::kind::unreadable, "cannot open for write: " + path);
    out << content;
    if (!out) throw io_error(io_error::kind::unreadable, "write failed: " + path);
}

} // namespace detail

inline std::string reliability_csv(const ReliabilityBins& bins) {
    std::string csv = "bin_low,bin_high,count,mean_conf,mean_acc\n";
    const double width = 1.0 / static_cast<double>(bins.bin_count);
    for (std::size_t b = 0; b < bins.bin_count; ++b) {
        csv += format_double(static_cast<double>(b) * width) + "," +
               format_double(static_cast<double>(b + 1) * width) + "," +
               std::to_string(bins.counts[b]) + "," + format_double(bins.mean_confidence[b]) +
               "," + format_double(bins.mean_accuracy[b]) + "\n";
    }
    return csv;
}

// Writes report.json plus per-table CSVs (summary, per-seed cells, and one
// reliability-bin table per successful run) under the target directory.
inline void emit_report(const EvaluationReport& report, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const auto dir = std::filesystem::path(out_dir);

    detail::write_text_file((dir / "report.json").string(), report_to_json(report).dump(2) + "\n");

    std::string per_seed =
        "variant,seed,ok,accuracy,ece,nll,brier,kl_to_soft,param_count,final_train_loss,"
        "train_seconds,epoch_seconds_mean\n";
    for (const auto& r : report.records) {
        per_seed += r.variant + "," + std::to_string(r.seed) + "," + (r.ok ? "1" : "0") + ",";
        if (r.ok) {
            per_seed += format_double(r.calib.accuracy) + "," + format_double(r.calib.ece) + "," +
                        format_double(r.calib.nll) + "," + format_double(r.calib.brier) + ",";
            per_seed += r.calib.kl_to_soft ? format_double(*r.calib.kl_to_soft) : std::string();
        } else {
            per_seed += ",,,,";
        }
        per_seed += "," + std::to_string(r.param_count) + "," +
                    format_double(r.final_train_loss) + "," + format_double(r.train_seconds) +
                    "," + format_double(r.epoch_seconds_mean) + "\n";
    }
    detail::write_text_file((dir / "per_seed.csv").string(), per_seed);

    std::string summary =
        "variant,runs,accuracy_mean,accuracy_std,ece_mean,ece_std,nll_mean,nll_std,"
        "brier_mean,brier_std,kl_mean,kl_std\n";
    for (const auto& a : aggregate_records(report.records)) {
        summary += a.variant + "," + std::to_string(a.runs) + "," +
                   format_double(a.accuracy_mean) + "," + format_double(a.accuracy_std) + "," +
                   format_double(a.ece_mean) + "," + format_double(a.ece_std) + "," +
                   format_double(a.nll_mean) + "," + format_double(a.nll_std) + "," +
                   format_double(a.brier_mean) + "," + format_double(a.brier_std) + ",";
        if (a.kl_mean) summary += format_double(*a.kl_mean) + "," + format_double(*a.kl_std);
        else summary += ",";
        summary += "\n";
    }
    detail::write_text_file((dir / "summary.csv").string(), summary);

    for (const auto& r : report.records) {
        if (!r.ok) continue;
        const std::string name =
            "reliability_" + r.variant + "_" + std::to_string(r.seed) + ".csv";
        detail::write_text_file((dir / name).string(), reliability_csv(r.calib.bins));
    }
}

// --- OOD report ------------------------------------------------------------

struct OodEntry {
    std::string source;
    std::string score;  // "msp" or "energy"
    double auroc = 0.0;
    double fpr95 = 0.0;
    std::size_t n_id = 0;
    std::size_t n_ood = 0;
};

struct OodReport {
    std::string head_variant;
    std::uint64_t head_seed = 0;
    // Ranking orientation: MSP as-is; energy negated so for both scores a
    // higher value means more in-distribution.
    std::string orientation = "higher=in-distribution (energy negated)";
    std::vector<OodEntry> entries;
};

inline nlohmann::ordered_json ood_report_to_json(const OodReport& r) {
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["tool"] = kToolName;
    j["kind"] = "ood";
    j["head_variant"] = r.head_variant;
    j["head_seed"] = r.head_seed;
    j["orientation"] = r.orientation;
    nlohmann::ordered_json entries = nlohmann::ordered_json::array();
    for (const auto& e : r.entries)
        entries.push_back({{"source", e.source},
                           {"score", e.score},
                           {"auroc", e.auroc},
                           {"fpr95", e.fpr95},
                           {"n_id", e.n_id},
                           {"n_ood", e.n_ood}});
    j["entries"] = std::move(entries);
    return j;
}

inline void emit_ood_report(const OodReport& r, const std::string& path) {
    detail::write_text_file(path, ood_report_to_json(r).dump(2) + "\n");
    std::string csv = "source,score,auroc,fpr95,n_id,n_ood\n";
    for (const auto& e : r.entries)
        csv += e.source + "," + e.score + "," + format_double(e.auroc) + "," +
               format_double(e.fpr95) + "," + std::to_string(e.n_id) + "," +
               std::to_string(e.n_ood) + "\n";
    detail::write_text_file(path + ".csv", csv);
}

// --- Sensitivity sweep report -----------------------------------------------

struct SweepRun {
    std::size_t hilbert_dim = 0;
    std::size_t warmup_epochs = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double ece = 0.0;
};

struct SweepReport {
    std::vector<std::size_t> hilbert_dims;
    std::vector<std::size_t> warmups;
    std::vector<SweepRun> runs;
    nlohmann::ordered_json config_echo;

    // Mean ECE over the successful runs of one grid cell.
    std::optional<double> cell_mean(std::size_t dim, std::size_t warmup) const {
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& r : runs) {
            if (r.hilbert_dim != dim || r.warmup_epochs != warmup || !r.ok) continue;
            sum += r.ece;
            ++count;
        }
        if (count == 0) return std::nullopt;
        return sum / static_cast<double>(count);
    }
};

inline nlohmann::ordered_json sweep_report_to_json(const SweepReport& r) {
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["tool"] = kToolName;
    j["kind"] = "sweep";
    j["config"] = r.config_echo;
    j["hilbert_dims"] = r.hilbert_dims;
    j["warmup_epochs"] = r.warmups;
    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    for (const auto& run : r.runs) {
        nlohmann::ordered_json row = {{"hilbert_dim", run.hilbert_dim},
                                      {"warmup_epochs", run.warmup_epochs},
                                      {"seed", run.seed},
                                      {"ok", run.ok}};
        if (run.ok) row["ece"] = run.ece;
        else row["error"] = run.error;
        runs.push_back(std::move(row));
    }
    j["runs"] = std::move(runs);
    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (std::size_t w : r.warmups)
        for (std::size_t d : r.hilbert_dims) {
            nlohmann::ordered_json cell = {{"hilbert_dim", d}, {"warmup_epochs", w}};
            if (auto m = r.cell_mean(d, w)) cell["mean_ece"] = *m;
            cells.push_back(std::move(cell));
        }
    j["cells"] = std::move(cells);
    return j;
}

// sweep.csv mirrors the sensitivity table: one row per warmup setting, one
// column per Hilbert dimension. sweep_runs.csv holds the per-run cells.
inline void emit_sweep_report(const SweepReport& r, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const auto dir = std::filesystem::path(out_dir);
    detail::write_text_file((dir / "sweep.json").string(),
                            sweep_report_to_json(r).dump(2) + "\n");

    std::string grid = "warmup_epochs";
    for (std::size_t d : r.hilbert_dims) grid += ",d=" + std::to_string(d);
    grid += "\n";
    for (std::size_t w : r.warmups) {
        grid += std::to_string(w);
        for (std::size_t d : r.hilbert_dims) {
            grid += ",";
            if (auto m = r.cell_mean(d, w)) grid += format_double(*m);
        }
        grid += "\n";
    }
    detail::write_text_file((dir / "sweep.csv").string(), grid);

    std::string runs = "hilbert_dim,warmup_epochs,seed,ok,ece\n";
    for (const auto& run : r.runs) {
        runs += std::to_string(run.hilbert_dim) + "," + std::to_string(run.warmup_epochs) + "," +
                std::to_string(run.seed) + "," + (run.ok ? "1" : "0") + ",";
        if (run.ok) runs += format_double(run.ece);
        runs += "\n";
    }
    detail::write_text_file((dir / "sweep_runs.csv").string(), runs);
}

} // namespace wavehead
