#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wavehead/heads.hpp"
#include "wavehead/rng.hpp"
#include "wavehead/training.hpp"

namespace wavehead {

struct TensorCheck {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t components = 0;  // components above the magnitude floor
};

struct GradCheckReport {
    HeadVariant variant = HeadVariant::Softmax;
    bool pass = false;
    double worst_rel_err = 0.0;
    std::vector<TensorCheck> tensors;
};

// Central finite differences vs the analytic backward on a small synthetic
// batch. Parameters are re-randomised to a generic point first: the training
// init zeroes the classifier, which would zero out every upstream gradient
// and make the comparison vacuous.
inline GradCheckReport gradient_check(HeadVariant variant, std::uint64_t seed,
                                      double step = 1e-5, double rel_tol = 1e-4,
                                      double magnitude_floor = 1e-6) {
    HeadDims dims{/*feature_dim=*/7, /*hilbert_dim=*/6, /*classes=*/4, /*hidden=*/5};
    const std::size_t batch = 12;

    HeadParameters params = build_head(variant, dims, seed);
    {
        Rng rng(derive_stream(seed, "gradcheck/params"));
        for (auto& ref : tensor_refs(params))
            for (double& v : *ref.values) v = rng.uniform(-0.8, 0.8);
    }

    RealMatrix features(batch, dims.feature_dim);
    std::vector<std::uint32_t> labels(batch);
    {
        Rng rng(derive_stream(seed, "gradcheck/data"));
        for (double& v : features.data) v = rng.uniform(-1.0, 1.0);
        for (auto& y : labels) y = static_cast<std::uint32_t>(rng.below(dims.classes));
    }

    // Exercise the phase-regulariser path on complex variants.
    const double reg_weight = is_complex_variant(variant) ? 0.05 : 0.0;
    const std::uint64_t mask_seed = derive_stream(seed, "gradcheck/mask");

    auto analytic = backward(params, features, labels, reg_weight, mask_seed);
    auto grad_refs = tensor_refs(analytic.grads);
    auto param_refs = tensor_refs(params);

    GradCheckReport report;
    report.variant = variant;
    report.pass = true;

    for (std::size_t t = 0; t < param_refs.size(); ++t) {
        TensorCheck check;
        check.name = param_refs[t].name;
        auto& values = *param_refs[t].values;
        const auto& grad = *grad_refs[t].values;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + step;
            const double loss_plus = training_loss(params, features, labels, reg_weight, mask_seed);
            values[i] = saved - step;
            const double loss_minus = training_loss(params, features, labels, reg_weight, mask_seed);
            values[i] = saved;
            const double fd = (loss_plus - loss_minus) / (2.0 * step);
            const double denom = std::max(std::abs(fd), std::abs(grad[i]));
            if (denom <= magnitude_floor) continue;
            const double rel = std::abs(fd - grad[i]) / denom;
            check.max_rel_err = std::max(check.max_rel_err, rel);
            check.components += 1;
        }
        report.worst_rel_err = std::max(report.worst_rel_err, check.max_rel_err);
        if (check.max_rel_err >= rel_tol) report.pass = false;
        report.tensors.push_back(std::move(check));
    }
    return report;
}

inline std::vector<HeadVariant> all_head_variants() {
    return {HeadVariant::FullWave,  HeadVariant::NoBorn,    HeadVariant::NoUnitary,
            HeadVariant::ComplexLinear, HeadVariant::Softmax, HeadVariant::Softmax2x,
            HeadVariant::MCDropout, HeadVariant::EnergyLinear};
}

} // namespace wavehead
