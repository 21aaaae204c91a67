#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "wavehead/wavehead.hpp"

namespace {

// Exit codes: 0 success, 1 validation error, 2 numerical failure, 3 IO error.
constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitIo = 3;

nlohmann::ordered_json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw wavehead::io_error(wavehead::io_error::kind::unreadable, "cannot open: " + path);
    nlohmann::ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw wavehead::io_error(wavehead::io_error::kind::schema,
                                 std::string("invalid JSON in ") + path + ": " + e.what());
    }
    return j;
}

wavehead::FeatureDataset load_dataset(const std::string& path) {
    if (path.size() > 4 && path.substr(path.size() - 4) == ".csv")
        return wavehead::read_features_csv(path);
    return wavehead::read_features(path);
}

int cmd_gen_features(const std::string& config_path, const std::string& out_path,
                     std::uint64_t seed) {
    const auto j = load_json_file(config_path);
    wavehead::SyntheticConfig config = wavehead::detail::synthetic_from_json(j);
    const wavehead::FeatureDataset ds = wavehead::generate_synthetic(config, seed);
    wavehead::write_features(ds, out_path);
    std::cout << "wrote " << ds.size() << " samples (dim " << ds.dim() << ", " << ds.n_classes
              << " classes" << (ds.soft_labels ? ", soft labels" : "") << ") to " << out_path
              << "\n";
    return kExitOk;
}

int cmd_train(const std::string& variant_tag, const std::string& features_path,
              std::uint64_t seed, const std::string& schedule_path, const std::string& out_path,
              std::size_t hilbert_dim, std::size_t hidden) {
    const wavehead::HeadVariant variant = wavehead::head_variant_from_string(variant_tag);
    const wavehead::FeatureDataset data = load_dataset(features_path);
    wavehead::TrainSchedule schedule;
    if (!schedule_path.empty())
        schedule = wavehead::detail::schedule_from_json(load_json_file(schedule_path));

    const wavehead::HeadDims dims{data.dim(), hilbert_dim, data.n_classes, hidden};
    const wavehead::TrainResult result =
        wavehead::train(variant, dims, data, schedule, seed);
    wavehead::save_head(result.params, out_path);
    std::cout << "trained " << variant_tag << " (" << wavehead::parameter_count(result.params)
              << " params) in " << result.seconds << "s; final loss "
              << result.epoch_loss.back() << "; saved to " << out_path << "\n";
    return kExitOk;
}

int cmd_evaluate(const std::string& params_path, const std::string& features_path,
                 bool use_soft_labels, const std::string& out_path, std::size_t bins) {
    const wavehead::HeadParameters params = wavehead::load_head(params_path);
    const wavehead::FeatureDataset data = load_dataset(features_path);
    const wavehead::CalibrationReport calib =
        wavehead::evaluate_head(params, data, use_soft_labels, bins);

    nlohmann::ordered_json j;
    j["schema_version"] = wavehead::kReportSchemaVersion;
    j["tool"] = wavehead::kToolName;
    j["kind"] = "evaluation";
    j["variant"] = wavehead::to_string(params.variant);
    j["seed"] = params.seed;
    j["dataset"] = data.provenance;
    j["accuracy"] = calib.accuracy;
    j["ece"] = calib.ece;
    j["nll"] = calib.nll;
    j["brier"] = calib.brier;
    if (calib.kl_to_soft) j["kl_to_soft"] = *calib.kl_to_soft;
    j["reliability"] = wavehead::bins_to_json(calib.bins);
    wavehead::detail::write_text_file(out_path, j.dump(2) + "\n");
    wavehead::detail::write_text_file(out_path + ".bins.csv",
                                      wavehead::reliability_csv(calib.bins));
    std::cout << "accuracy " << calib.accuracy << "  ece " << calib.ece << "  nll " << calib.nll
              << "  brier " << calib.brier;
    if (calib.kl_to_soft) std::cout << "  kl " << *calib.kl_to_soft;
    std::cout << "\n";
    return kExitOk;
}

int cmd_ablate(const std::string& config_path, const std::string& out_dir) {
    const wavehead::ExperimentConfig config = wavehead::load_experiment_config(config_path);
    const wavehead::EvaluationReport report = wavehead::run_ablation(config);
    wavehead::emit_report(report, out_dir);
    std::size_t failed = 0;
    for (const auto& r : report.records)
        if (!r.ok) ++failed;
    std::cout << "ablation: " << report.records.size() << " runs (" << failed
              << " failed), report in " << out_dir << "\n";
    return kExitOk;
}

int cmd_ood(const std::string& params_path, const std::string& id_path,
            const std::vector<std::string>& ood_paths, const std::string& score_tag,
            const std::string& out_path) {
    const wavehead::HeadParameters params = wavehead::load_head(params_path);
    const wavehead::FeatureDataset id_data = load_dataset(id_path);
    std::vector<std::pair<std::string, wavehead::FeatureDataset>> ood_sets;
    for (const auto& path : ood_paths) ood_sets.emplace_back(path, load_dataset(path));
    const wavehead::OodScore score = wavehead::ood_score_from_string(score_tag);
    const wavehead::OodReport report = wavehead::run_ood(params, id_data, ood_sets, {score});
    wavehead::emit_ood_report(report, out_path);
    for (const auto& e : report.entries)
        std::cout << e.source << " [" << e.score << "] auroc " << e.auroc << "  fpr95 "
                  << e.fpr95 << "\n";
    return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir) {
    const wavehead::SweepConfig config = wavehead::load_sweep_config(config_path);
    const wavehead::SweepReport report = wavehead::run_sweep(config);
    wavehead::emit_sweep_report(report, out_dir);
    std::cout << "sweep: " << report.runs.size() << " runs over "
              << report.hilbert_dims.size() << "x" << report.warmups.size()
              << " grid, report in " << out_dir << "\n";
    return kExitOk;
}

int cmd_gradcheck(const std::string& variant_tag, std::uint64_t seed) {
    std::vector<wavehead::HeadVariant> variants;
    if (variant_tag == "all") variants = wavehead::all_head_variants();
    else variants.push_back(wavehead::head_variant_from_string(variant_tag));

    bool all_pass = true;
    for (const wavehead::HeadVariant v : variants) {
        const wavehead::GradCheckReport report = wavehead::gradient_check(v, seed);
        std::cout << wavehead::to_string(v) << ": "
                  << (report.pass ? "pass" : "FAIL")
                  << " (worst rel err " << report.worst_rel_err << ")\n";
        for (const auto& t : report.tensors)
            std::cout << "  " << t.name << ": max rel err " << t.max_rel_err << " over "
                      << t.components << " components\n";
        all_pass = all_pass && report.pass;
    }
    if (!all_pass) {
        std::cerr << "gradcheck: analytic/finite-difference mismatch\n";
        return kExitNumeric;
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Complex-valued unitary classification heads: training and "
                 "calibration evaluation harness"};
    app.require_subcommand(1);

    std::string config_path, out_path, features_path, params_path, schedule_path;
    std::string variant_tag = "NoBorn", score_tag = "msp", id_path;
    std::vector<std::string> ood_paths;
    std::uint64_t seed = 42;
    std::size_t hilbert_dim = 64, hidden = 128, bins = 15;
    bool use_soft_labels = false;

    auto* gen = app.add_subcommand("gen-features", "Generate a synthetic feature dataset");
    gen->add_option("--config", config_path, "Synthetic config JSON")->required();
    gen->add_option("--out", out_path, "Output FCAL path")->required();
    gen->add_option("--seed", seed, "Generator seed");

    auto* train_cmd = app.add_subcommand("train", "Train a head on a feature dataset");
    train_cmd->add_option("--variant", variant_tag, "Head variant tag")->required();
    train_cmd->add_option("--features", features_path, "FCAL or CSV dataset")->required();
    train_cmd->add_option("--seed", seed, "Run seed")->required();
    train_cmd->add_option("--schedule", schedule_path, "Training schedule JSON");
    train_cmd->add_option("--out", out_path, "Output parameter file")->required();
    train_cmd->add_option("--hilbert-dim", hilbert_dim, "Hilbert dimension d");
    train_cmd->add_option("--hidden", hidden, "Hidden width for MLP variants");

    auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a trained head");
    eval_cmd->add_option("--params", params_path, "Trained parameter file")->required();
    eval_cmd->add_option("--features", features_path, "FCAL or CSV dataset")->required();
    eval_cmd->add_flag("--soft-labels", use_soft_labels, "Report KL to the soft labels");
    eval_cmd->add_option("--out", out_path, "Output report JSON")->required();
    eval_cmd->add_option("--bins", bins, "Reliability bin count");

    auto* ablate = app.add_subcommand("ablate", "Run the multi-variant, multi-seed ablation");
    ablate->add_option("--config", config_path, "Experiment config JSON")->required();
    ablate->add_option("--out", out_path, "Output directory")->required();

    auto* ood = app.add_subcommand("ood", "Score in- vs out-of-distribution separation");
    ood->add_option("--params", params_path, "Trained parameter file")->required();
    ood->add_option("--id", id_path, "In-distribution dataset")->required();
    ood->add_option("--ood", ood_paths, "OOD dataset(s)")->required();
    ood->add_option("--score", score_tag, "msp|energy");
    ood->add_option("--out", out_path, "Output report JSON")->required();

    auto* sweep = app.add_subcommand("sweep", "Hilbert-dim x warmup sensitivity sweep");
    sweep->add_option("--config", config_path, "Sweep config JSON")->required();
    sweep->add_option("--out", out_path, "Output directory")->required();

    auto* gradcheck = app.add_subcommand("gradcheck",
                                         "Compare analytic gradients with finite differences");
    gradcheck->add_option("--variant", variant_tag, "Head variant tag or 'all'");
    gradcheck->add_option("--seed", seed, "Check seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (gen->parsed()) return cmd_gen_features(config_path, out_path, seed);
        if (train_cmd->parsed())
            return cmd_train(variant_tag, features_path, seed, schedule_path, out_path,
                             hilbert_dim, hidden);
        if (eval_cmd->parsed())
            return cmd_evaluate(params_path, features_path, use_soft_labels, out_path, bins);
        if (ablate->parsed()) return cmd_ablate(config_path, out_path);
        if (ood->parsed()) return cmd_ood(params_path, id_path, ood_paths, score_tag, out_path);
        if (sweep->parsed()) return cmd_sweep(config_path, out_path);
        if (gradcheck->parsed()) return cmd_gradcheck(variant_tag, seed);
    } catch (const wavehead::io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const wavehead::numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const wavehead::validation_error& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitOk;
}
