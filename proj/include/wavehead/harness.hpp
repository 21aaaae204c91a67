#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "wavehead/baselines.hpp"
#include "wavehead/data.hpp"
#include "wavehead/errors.hpp"
#include "wavehead/heads.hpp"
#include "wavehead/metrics.hpp"
#include "wavehead/report.hpp"
#include "wavehead/training.hpp"

namespace wavehead {

struct DataSource {
    bool synthetic = true;
    SyntheticConfig base;  // n_samples ignored; n_train/n_test used instead
    std::size_t n_train = 20000;
    std::size_t n_test = 4000;
    std::uint64_t data_seed = 7;
    std::string train_path;  // FCAL files when synthetic == false
    std::string test_path;
};

struct ExperimentConfig {
    std::vector<HeadVariant> variants{HeadVariant::FullWave,      HeadVariant::NoBorn,
                                      HeadVariant::NoUnitary,     HeadVariant::ComplexLinear,
                                      HeadVariant::Softmax,       HeadVariant::Softmax2x};
    std::vector<std::uint64_t> seeds{42, 123, 456};
    std::size_t hilbert_dim = 64;
    std::size_t hidden = 128;
    TrainSchedule schedule;
    DataSource data;
    std::size_t bins = 15;
    double calibration_fraction = 0.1;  // held-out split for temperature fitting
    bool temperature_scaling = true;
    std::size_t threads = 1;
    nlohmann::ordered_json echo;  // raw config document for the report

    void validate() const {
        if (variants.empty()) throw validation_error("config: no variants listed");
        if (seeds.empty()) throw validation_error("config: no seeds listed");
        if (bins == 0) throw validation_error("config: bins must be positive");
        if (calibration_fraction <= 0.0 || calibration_fraction >= 1.0)
            throw validation_error("config: calibration_fraction must be in (0,1)");
        schedule.validate();
    }
};

namespace detail {

inline SyntheticConfig synthetic_from_json(const nlohmann::json& j) {
    SyntheticConfig c;
    if (j.contains("classes")) c.classes = j["classes"].get<std::size_t>();
    if (j.contains("dim")) c.dim = j["dim"].get<std::size_t>();
    if (j.contains("n_samples")) c.n_samples = j["n_samples"].get<std::size_t>();
    if (j.contains("sigma")) c.sigma = j["sigma"].get<double>();
    if (j.contains("mean_scale")) c.mean_scale = j["mean_scale"].get<double>();
    if (j.contains("means")) c.means = j["means"].get<std::vector<std::vector<double>>>();
    if (j.contains("priors")) c.priors = j["priors"].get<std::vector<double>>();
    if (j.contains("ood_mode")) c.ood_mode = ood_mode_from_string(j["ood_mode"].get<std::string>());
    if (j.contains("ood_shift")) c.ood_shift = j["ood_shift"].get<double>();
    if (j.contains("noise_scale")) c.noise_scale = j["noise_scale"].get<double>();
    if (j.contains("name")) c.name = j["name"].get<std::string>();
    return c;
}

inline TrainSchedule schedule_from_json(const nlohmann::json& j) {
    TrainSchedule s;
    if (j.contains("epochs")) s.epochs = j["epochs"].get<std::size_t>();
    if (j.contains("warmup_epochs")) s.warmup_epochs = j["warmup_epochs"].get<std::size_t>();
    if (j.contains("ramp_epochs")) s.ramp_epochs = j["ramp_epochs"].get<std::size_t>();
    if (j.contains("lambda")) s.lambda = j["lambda"].get<double>();
    if (j.contains("learning_rate")) s.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("batch_size")) s.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("phase_regulariser")) s.phase_regulariser = j["phase_regulariser"].get<bool>();
    return s;
}

} // namespace detail

inline ExperimentConfig experiment_config_from_json(const nlohmann::ordered_json& j) {
    try {
        ExperimentConfig c;
        c.echo = j;
        if (j.contains("variants")) {
            c.variants.clear();
            for (const auto& tag : j["variants"])
                c.variants.push_back(head_variant_from_string(tag.get<std::string>()));
        }
        if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
        if (j.contains("dims")) {
            const auto& dims = j["dims"];
            if (dims.contains("hilbert_dim")) c.hilbert_dim = dims["hilbert_dim"].get<std::size_t>();
            if (dims.contains("hidden")) c.hidden = dims["hidden"].get<std::size_t>();
        }
        if (j.contains("schedule")) c.schedule = detail::schedule_from_json(j["schedule"]);
        if (j.contains("data")) {
            const auto& data = j["data"];
            if (data.contains("train_path") || data.contains("test_path")) {
                c.data.synthetic = false;
                c.data.train_path = data.at("train_path").get<std::string>();
                c.data.test_path = data.at("test_path").get<std::string>();
            }
            if (data.contains("synthetic"))
                c.data.base = detail::synthetic_from_json(data["synthetic"]);
            if (data.contains("n_train")) c.data.n_train = data["n_train"].get<std::size_t>();
            if (data.contains("n_test")) c.data.n_test = data["n_test"].get<std::size_t>();
            if (data.contains("data_seed")) c.data.data_seed = data["data_seed"].get<std::uint64_t>();
        }
        if (j.contains("bins")) c.bins = j["bins"].get<std::size_t>();
        if (j.contains("calibration_fraction"))
            c.calibration_fraction = j["calibration_fraction"].get<double>();
        if (j.contains("temperature_scaling"))
            c.temperature_scaling = j["temperature_scaling"].get<bool>();
        if (j.contains("threads")) c.threads = j["threads"].get<std::size_t>();
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw io_error(io_error::kind::schema, std::string("config: malformed JSON: ") + e.what());
    }
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error(io_error::kind::unreadable, "cannot open: " + path);
    nlohmann::ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw io_error(io_error::kind::schema, std::string("config: invalid JSON: ") + e.what());
    }
    return experiment_config_from_json(j);
}

struct AblationData {
    FeatureDataset train;  // full training pool (calibration split carved per seed)
    FeatureDataset test;
};

inline AblationData load_ablation_data(const ExperimentConfig& config) {
    AblationData data;
    if (config.data.synthetic) {
        SyntheticConfig train_cfg = config.data.base;
        train_cfg.n_samples = config.data.n_train;
        train_cfg.name += "-train";
        SyntheticConfig test_cfg = config.data.base;
        test_cfg.n_samples = config.data.n_test;
        test_cfg.name += "-test";
        data.train = generate_synthetic(train_cfg, config.data.data_seed);
        data.test = generate_synthetic(test_cfg, config.data.data_seed);
    } else {
        data.train = read_features(config.data.train_path);
        data.test = read_features(config.data.test_path);
    }
    if (data.train.dim() != data.test.dim() || data.train.n_classes != data.test.n_classes)
        throw validation_error("ablation: train/test shape mismatch");
    return data;
}

// Evaluates a trained head on a dataset. MC-Dropout eval passes draw from a
// stream derived from the head's seed, so evaluation is deterministic.
inline CalibrationReport evaluate_head(const HeadParameters& params, const FeatureDataset& data,
                                       bool use_soft_labels, std::size_t bins,
                                       std::string_view eval_label = "eval") {
    Rng rng(derive_stream(params.seed, std::string(eval_label) + "/" + to_string(params.variant)));
    const PredictionBatch preds = forward(params, data.features, ForwardMode::Eval, &rng);
    if (use_soft_labels && !data.soft_labels)
        throw validation_error("evaluate: dataset has no soft labels");
    return evaluate_predictions(preds.probs, data.labels,
                                use_soft_labels ? &*data.soft_labels : nullptr, bins);
}

namespace detail {

// Runs `count` independent jobs on up to `threads` workers. Results land in
// pre-assigned slots, so the outcome is identical to a serial loop.
template <class Job>
inline void run_jobs(std::size_t count, std::size_t threads, Job&& job) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const std::size_t workers = std::min(threads, count);
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                job(i);
            }
        });
    for (auto& t : pool) t.join();
}

} // namespace detail

// Shared-backbone ablation: every (variant, seed) cell trains on the identical
// feature arrays and evaluates on the shared test set. A failing cell is
// recorded with its error instead of aborting the run.
inline EvaluationReport run_ablation(const ExperimentConfig& config) {
    config.validate();
    const AblationData data = load_ablation_data(config);
    const std::string train_checksum = feature_checksum(data.train);
    const std::string test_checksum = feature_checksum(data.test);

    EvaluationReport report;
    report.config_echo = config.echo.is_null() ? nlohmann::ordered_json::object() : config.echo;
    report.train_checksum = train_checksum;
    report.test_checksum = test_checksum;
    report.train_size = data.train.size();
    report.test_size = data.test.size();
    report.classes = data.train.n_classes;

    // Per-seed train/calibration split, shared by every variant of that seed.
    struct SeedData {
        FeatureDataset train;
        FeatureDataset calibration;
    };
    std::vector<SeedData> per_seed;
    per_seed.reserve(config.seeds.size());
    for (std::uint64_t seed : config.seeds) {
        auto parts = split(data.train, {1.0 - config.calibration_fraction,
                                        config.calibration_fraction}, seed);
        per_seed.push_back({std::move(parts[0]), std::move(parts[1])});
    }

    struct Cell {
        std::string variant_tag;  // "TempScaling" for the post-hoc rows
        HeadVariant variant;
        std::size_t seed_index;
    };
    std::vector<Cell> cells;
    for (const HeadVariant v : config.variants)
        for (std::size_t s = 0; s < config.seeds.size(); ++s)
            cells.push_back({to_string(v), v, s});
    if (config.temperature_scaling)
        for (std::size_t s = 0; s < config.seeds.size(); ++s)
            cells.push_back({"TempScaling", HeadVariant::Softmax, s});

    std::vector<RunRecord> records(cells.size());

    detail::run_jobs(cells.size(), config.threads, [&](std::size_t index) {
        const Cell& cell = cells[index];
        const std::uint64_t seed = config.seeds[cell.seed_index];
        const SeedData& sd = per_seed[cell.seed_index];
        RunRecord rec;
        rec.variant = cell.variant_tag;
        rec.seed = seed;
        try {
            if (feature_checksum(data.test) != test_checksum)
                throw validation_error("ablation: shared test features diverged");

            HeadDims dims{data.train.dim(), config.hilbert_dim, data.train.n_classes,
                          config.hidden};
            TrainResult trained = train(cell.variant, dims, sd.train, config.schedule, seed);
            rec.param_count = parameter_count(trained.params);
            rec.final_train_loss = trained.epoch_loss.back();
            rec.train_seconds = trained.seconds;
            rec.epoch_seconds_mean = trained.epoch_seconds_mean;

            if (cell.variant_tag == "TempScaling") {
                Rng cal_rng(derive_stream(seed, "tempscale/cal"));
                const PredictionBatch cal =
                    forward(trained.params, sd.calibration.features, ForwardMode::Eval, &cal_rng);
                if (!cal.logits)
                    throw validation_error("temperature scaling needs a logits-producing head");
                const TemperatureModel model = fit_temperature(
                    *cal.logits, sd.calibration.labels, sd.calibration.provenance);
                if (model.fitted_on == data.test.provenance)
                    throw validation_error("temperature scaling: would evaluate on fitting split");
                Rng eval_rng(derive_stream(seed, "tempscale/eval"));
                const PredictionBatch raw =
                    forward(trained.params, data.test.features, ForwardMode::Eval, &eval_rng);
                const PredictionBatch scaled = apply_temperature(model, *raw.logits);
                rec.calib = evaluate_predictions(
                    scaled.probs, data.test.labels,
                    data.test.soft_labels ? &*data.test.soft_labels : nullptr, config.bins);
                rec.param_count += 1;  // the fitted temperature
            } else {
                rec.calib = evaluate_head(trained.params, data.test,
                                          data.test.soft_labels.has_value(), config.bins);
            }
            rec.ok = true;
        } catch (const std::exception& e) {
            rec.ok = false;
            rec.error = e.what();
        }
        records[index] = std::move(rec);
    });

    report.records = std::move(records);
    return report;
}

enum class OodScore { Msp, Energy };

inline const char* to_string(OodScore s) {
    return s == OodScore::Msp ? "msp" : "energy";
}

inline OodScore ood_score_from_string(std::string_view tag) {
    if (tag == "msp") return OodScore::Msp;
    if (tag == "energy") return OodScore::Energy;
    throw validation_error("unknown ood score: " + std::string(tag));
}

// Scores a batch for in-distribution-ness: MSP as-is, energy negated so a
// higher score always ranks as more in-distribution.
inline std::vector<double> ood_ranking_scores(const HeadParameters& params,
                                              const FeatureDataset& data, OodScore score,
                                              std::string_view label) {
    Rng rng(derive_stream(params.seed, "ood/" + std::string(label)));
    const PredictionBatch preds = forward(params, data.features, ForwardMode::Eval, &rng);
    if (score == OodScore::Msp) return msp_scores(preds.probs);
    if (!preds.logits)
        throw validation_error("energy score needs a logits-producing head (got " +
                               std::string(to_string(params.variant)) + ")");
    std::vector<double> scores = energy_scores(*preds.logits);
    for (double& s : scores) s = -s;
    return scores;
}

inline OodReport run_ood(const HeadParameters& params, const FeatureDataset& id_data,
                         const std::vector<std::pair<std::string, FeatureDataset>>& ood_sets,
                         const std::vector<OodScore>& scores) {
    if (ood_sets.empty()) throw validation_error("ood: at least one OOD source required");
    if (scores.empty()) throw validation_error("ood: at least one score required");

    OodReport report;
    report.head_variant = to_string(params.variant);
    report.head_seed = params.seed;

    for (const OodScore score : scores) {
        const auto id_scores = ood_ranking_scores(params, id_data, score, "id");
        for (const auto& [name, ood_data] : ood_sets) {
            const auto ood_scores_v = ood_ranking_scores(params, ood_data, score, name);
            OodEntry entry;
            entry.source = name;
            entry.score = to_string(score);
            entry.auroc = auroc(id_scores, ood_scores_v);
            entry.fpr95 = fpr_at_95_tpr(id_scores, ood_scores_v);
            entry.n_id = id_scores.size();
            entry.n_ood = ood_scores_v.size();
            report.entries.push_back(std::move(entry));
        }
    }
    return report;
}

struct SweepConfig {
    std::vector<std::size_t> hilbert_dims{16, 32, 64, 128};
    std::vector<std::size_t> warmups{0, 4, 8, 15};
    std::vector<std::uint64_t> seeds{42, 123, 456};
    TrainSchedule schedule;
    DataSource data;
    std::size_t hidden = 128;
    std::size_t bins = 15;
    std::size_t threads = 1;
    nlohmann::ordered_json echo;
};

inline SweepConfig sweep_config_from_json(const nlohmann::ordered_json& j) {
    try {
        SweepConfig c;
        c.echo = j;
        if (j.contains("hilbert_dims"))
            c.hilbert_dims = j["hilbert_dims"].get<std::vector<std::size_t>>();
        if (j.contains("warmup_epochs"))
            c.warmups = j["warmup_epochs"].get<std::vector<std::size_t>>();
        if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
        if (j.contains("schedule")) c.schedule = detail::schedule_from_json(j["schedule"]);
        if (j.contains("data")) {
            const auto& data = j["data"];
            if (data.contains("train_path") || data.contains("test_path")) {
                c.data.synthetic = false;
                c.data.train_path = data.at("train_path").get<std::string>();
                c.data.test_path = data.at("test_path").get<std::string>();
            }
            if (data.contains("synthetic"))
                c.data.base = detail::synthetic_from_json(data["synthetic"]);
            if (data.contains("n_train")) c.data.n_train = data["n_train"].get<std::size_t>();
            if (data.contains("n_test")) c.data.n_test = data["n_test"].get<std::size_t>();
            if (data.contains("data_seed")) c.data.data_seed = data["data_seed"].get<std::uint64_t>();
        }
        if (j.contains("bins")) c.bins = j["bins"].get<std::size_t>();
        if (j.contains("threads")) c.threads = j["threads"].get<std::size_t>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw io_error(io_error::kind::schema,
                       std::string("sweep config: malformed JSON: ") + e.what());
    }
}

inline SweepConfig load_sweep_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error(io_error::kind::unreadable, "cannot open: " + path);
    nlohmann::ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw io_error(io_error::kind::schema,
                       std::string("sweep config: invalid JSON: ") + e.what());
    }
    return sweep_config_from_json(j);
}

// Hilbert-dimension x warmup sensitivity sweep on the NoBorn head: per-cell
// ECE averaged over seeds.
inline SweepReport run_sweep(const SweepConfig& config) {
    if (config.hilbert_dims.empty() || config.warmups.empty())
        throw validation_error("sweep: empty grid");
    for (std::size_t d : config.hilbert_dims)
        if (d == 0) throw validation_error("sweep: hilbert_dim must be positive");
    for (std::size_t w : config.warmups)
        if (w >= config.schedule.epochs)
            throw validation_error("sweep: warmup " + std::to_string(w) +
                                   " not shorter than epochs");
    if (config.seeds.empty()) throw validation_error("sweep: no seeds listed");

    ExperimentConfig base;
    base.data = config.data;
    const AblationData data = load_ablation_data(base);

    SweepReport report;
    report.hilbert_dims = config.hilbert_dims;
    report.warmups = config.warmups;
    report.config_echo = config.echo.is_null() ? nlohmann::ordered_json::object() : config.echo;

    struct Cell {
        std::size_t dim;
        std::size_t warmup;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (std::size_t w : config.warmups)
        for (std::size_t d : config.hilbert_dims)
            for (std::uint64_t seed : config.seeds) cells.push_back({d, w, seed});

    std::vector<SweepRun> runs(cells.size());
    detail::run_jobs(cells.size(), config.threads, [&](std::size_t index) {
        const Cell& cell = cells[index];
        SweepRun run;
        run.hilbert_dim = cell.dim;
        run.warmup_epochs = cell.warmup;
        run.seed = cell.seed;
        try {
            TrainSchedule schedule = config.schedule;
            schedule.warmup_epochs = cell.warmup;
            HeadDims dims{data.train.dim(), cell.dim, data.train.n_classes, config.hidden};
            TrainResult trained =
                train(HeadVariant::NoBorn, dims, data.train, schedule, cell.seed);
            const CalibrationReport calib =
                evaluate_head(trained.params, data.test, false, config.bins, "sweep-eval");
            run.ece = calib.ece;
            run.ok = true;
        } catch (const std::exception& e) {
            run.ok = false;
            run.error = e.what();
        }
        runs[index] = std::move(run);
    });
    report.runs = std::move(runs);
    return report;
}

} // namespace wavehead
