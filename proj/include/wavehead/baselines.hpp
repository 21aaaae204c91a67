#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wavehead/errors.hpp"
#include "wavehead/heads.hpp"
#include "wavehead/linalg.hpp"
#include "wavehead/metrics.hpp"

namespace wavehead {

// Post-hoc temperature scaling. `fitted_on` records which split the
// temperature was fitted on so the harness can refuse to evaluate on it.
struct TemperatureModel {
    double temperature = 1.0;
    std::string fitted_on;
};

inline PredictionBatch apply_temperature(const TemperatureModel& model, const RealMatrix& logits) {
    if (!(model.temperature > 0.0))
        throw validation_error("apply_temperature: temperature must be positive");
    RealMatrix scaled = logits;
    const double inv = 1.0 / model.temperature;
    for (double& z : scaled.data) z *= inv;
    RealMatrix probs(scaled.rows, scaled.cols);
    for (std::size_t i = 0; i < scaled.rows; ++i)
        softmax_row(scaled.row(i), probs.row(i), scaled.cols);
    PredictionBatch out;
    out.probs = std::move(probs);
    out.logits = std::move(scaled);
    return out;
}

// Minimises mean NLL of softmax(z/T) by golden-section search on [0.05, 10].
// Derivative-free on purpose: the NLL landscape can be nearly flat in T.
inline TemperatureModel fit_temperature(const RealMatrix& logits,
                                        const std::vector<std::uint32_t>& labels,
                                        const std::string& fitted_on = "",
                                        double tolerance = 1e-4) {
    if (logits.rows == 0) throw validation_error("fit_temperature: empty input");
    if (logits.rows != labels.size())
        throw dimension_error("fit_temperature: label count mismatch");

    const auto objective = [&](double t) {
        TemperatureModel m{t, ""};
        return nll(apply_temperature(m, logits).probs, labels);
    };

    double lo = 0.05;
    double hi = 10.0;
    const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - ratio * (hi - lo);
    double x2 = lo + ratio * (hi - lo);
    double f1 = objective(x1);
    double f2 = objective(x2);
    while (hi - lo > tolerance) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = objective(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = objective(x2);
        }
    }
    return TemperatureModel{0.5 * (lo + hi), fitted_on};
}

// Energy score -log Σ exp(z_k), max-shifted. Lower = more in-distribution
// under this sign convention; the harness negates it for AUROC ranking so
// that, like MSP, higher ranked score means more in-distribution.
inline double energy_score(const double* logits, std::size_t c) {
    double peak = logits[0];
    for (std::size_t k = 1; k < c; ++k) peak = std::max(peak, logits[k]);
    double acc = 0.0;
    for (std::size_t k = 0; k < c; ++k) acc += std::exp(logits[k] - peak);
    return -(peak + std::log(acc));
}

inline std::vector<double> energy_scores(const RealMatrix& logits) {
    std::vector<double> out(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i)
        out[i] = energy_score(logits.row(i), logits.cols);
    return out;
}

} // namespace wavehead
