#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "wavehead/data.hpp"
#include "wavehead/errors.hpp"
#include "wavehead/heads.hpp"
#include "wavehead/linalg.hpp"
#include "wavehead/metrics.hpp"
#include "wavehead/rng.hpp"

namespace wavehead {

struct TrainSchedule {
    std::size_t epochs = 30;
    std::size_t warmup_epochs = 8;  // classification loss only until here
    std::size_t ramp_epochs = 5;    // linear ramp of the regulariser weight
    double lambda = 0.01;           // full phase-regulariser weight
    double learning_rate = 1e-3;
    std::size_t batch_size = 128;
    bool phase_regulariser = true;  // applies to complex variants only

    void validate() const {
        if (epochs == 0) throw validation_error("TrainSchedule: epochs must be positive");
        if (warmup_epochs >= epochs)
            throw validation_error("TrainSchedule: warmup must be shorter than training");
        if (ramp_epochs == 0) throw validation_error("TrainSchedule: ramp_epochs must be positive");
        if (!std::isfinite(lambda) || lambda < 0.0)
            throw validation_error("TrainSchedule: lambda must be finite and non-negative");
        if (!(learning_rate > 0.0))
            throw validation_error("TrainSchedule: learning rate must be positive");
        if (batch_size == 0) throw validation_error("TrainSchedule: batch size must be positive");
    }
};

inline double cross_entropy(const PredictionBatch& batch, const std::vector<std::uint32_t>& labels) {
    return nll(batch.probs, labels);
}

// Population variance of the principal-value phases atan2(im, re); components
// with magnitude below 1e-12 are excluded (phase undefined there).
inline double phase_variance(const ComplexVector& psi) {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < psi.dim(); ++i) {
        if (std::sqrt(psi.re[i] * psi.re[i] + psi.im[i] * psi.im[i]) < 1e-12) continue;
        const double theta = std::atan2(psi.im[i], psi.re[i]);
        sum += theta;
        sum_sq += theta * theta;
        ++count;
    }
    if (count < 2) return 0.0;
    const double inv = 1.0 / static_cast<double>(count);
    const double mean = sum * inv;
    return sum_sq * inv - mean * mean;
}

// Regulariser weight at 1-based epoch t: zero through warmup, then a linear
// ramp to lambda over ramp_epochs.
inline double ramp_weight(std::size_t epoch, const TrainSchedule& s) {
    if (epoch < 1) throw validation_error("ramp_weight: epochs are 1-based");
    if (epoch <= s.warmup_epochs) return 0.0;
    const double progress = static_cast<double>(epoch - s.warmup_epochs) /
                            static_cast<double>(s.ramp_epochs);
    return s.lambda * std::min(1.0, progress);
}

// Gradient tensors mirror HeadParameters shape-for-shape.
struct Gradients {
    RealMatrix proj_re, proj_im;
    RealMatrix unitary_gen;
    MeasurementSet measurements;
    RealMatrix hid_w;
    std::vector<double> hid_b;
    RealMatrix cls_w;
    std::vector<double> cls_b;

    static Gradients zeros_like(const HeadParameters& p) {
        Gradients g;
        g.proj_re = RealMatrix(p.proj_re.rows, p.proj_re.cols);
        g.proj_im = RealMatrix(p.proj_im.rows, p.proj_im.cols);
        g.unitary_gen = RealMatrix(p.unitary_gen.rows, p.unitary_gen.cols);
        for (const auto& m : p.measurements.vectors)
            g.measurements.vectors.emplace_back(m.dim());
        g.hid_w = RealMatrix(p.hid_w.rows, p.hid_w.cols);
        g.hid_b.assign(p.hid_b.size(), 0.0);
        g.cls_w = RealMatrix(p.cls_w.rows, p.cls_w.cols);
        g.cls_b.assign(p.cls_b.size(), 0.0);
        return g;
    }
};

// Flat view over the trainable tensors, in a fixed order shared by the
// parameters, their gradients, and the Adam moments.
struct TensorRef {
    std::string name;
    std::vector<double>* values;
};

inline std::vector<TensorRef> tensor_refs(HeadParameters& p) {
    std::vector<TensorRef> refs;
    if (!p.proj_re.data.empty()) refs.push_back({"proj_re", &p.proj_re.data});
    if (!p.proj_im.data.empty()) refs.push_back({"proj_im", &p.proj_im.data});
    if (!p.unitary_gen.data.empty()) refs.push_back({"unitary_gen", &p.unitary_gen.data});
    for (std::size_t k = 0; k < p.measurements.vectors.size(); ++k) {
        refs.push_back({"measurements[" + std::to_string(k) + "].re",
                        &p.measurements.vectors[k].re});
        refs.push_back({"measurements[" + std::to_string(k) + "].im",
                        &p.measurements.vectors[k].im});
    }
    if (!p.hid_w.data.empty()) refs.push_back({"hid_w", &p.hid_w.data});
    if (!p.hid_b.empty()) refs.push_back({"hid_b", &p.hid_b});
    if (!p.cls_w.data.empty()) refs.push_back({"cls_w", &p.cls_w.data});
    if (!p.cls_b.empty()) refs.push_back({"cls_b", &p.cls_b});
    return refs;
}

inline std::vector<TensorRef> tensor_refs(Gradients& g) {
    std::vector<TensorRef> refs;
    if (!g.proj_re.data.empty()) refs.push_back({"proj_re", &g.proj_re.data});
    if (!g.proj_im.data.empty()) refs.push_back({"proj_im", &g.proj_im.data});
    if (!g.unitary_gen.data.empty()) refs.push_back({"unitary_gen", &g.unitary_gen.data});
    for (std::size_t k = 0; k < g.measurements.vectors.size(); ++k) {
        refs.push_back({"measurements[" + std::to_string(k) + "].re",
                        &g.measurements.vectors[k].re});
        refs.push_back({"measurements[" + std::to_string(k) + "].im",
                        &g.measurements.vectors[k].im});
    }
    if (!g.hid_w.data.empty()) refs.push_back({"hid_w", &g.hid_w.data});
    if (!g.hid_b.empty()) refs.push_back({"hid_b", &g.hid_b});
    if (!g.cls_w.data.empty()) refs.push_back({"cls_w", &g.cls_w.data});
    if (!g.cls_b.empty()) refs.push_back({"cls_b", &g.cls_b});
    return refs;
}

struct AdamState {
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    std::size_t step = 0;

    static AdamState init(HeadParameters& p) {
        AdamState s;
        for (const auto& ref : tensor_refs(p)) {
            s.first_moment.emplace_back(ref.values->size(), 0.0);
            s.second_moment.emplace_back(ref.values->size(), 0.0);
        }
        return s;
    }
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

inline void adam_step(HeadParameters& params, Gradients& grads, AdamState& state, double lr) {
    auto p_refs = tensor_refs(params);
    auto g_refs = tensor_refs(grads);
    if (p_refs.size() != g_refs.size() || p_refs.size() != state.first_moment.size())
        throw dimension_error("adam_step: tensor layout mismatch");

    state.step += 1;
    const double bias1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));

    for (std::size_t t = 0; t < p_refs.size(); ++t) {
        auto& theta = *p_refs[t].values;
        const auto& grad = *g_refs[t].values;
        auto& m = state.first_moment[t];
        auto& v = state.second_moment[t];
        if (theta.size() != grad.size() || theta.size() != m.size())
            throw dimension_error("adam_step: tensor size mismatch at " + p_refs[t].name);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * grad[i];
            v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * grad[i] * grad[i];
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            theta[i] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEpsilon);
        }
    }
}

namespace detail {

// Loss terms shared by backward() and training_loss().
struct LossTerms {
    double cross_entropy = 0.0;   // batch mean
    double phase_variance = 0.0;  // batch mean (complex variants)
    double total(double reg_weight) const { return cross_entropy - reg_weight * phase_variance; }
};

inline LossTerms loss_from_trace(const HeadParameters& p, const ForwardTrace& t,
                                 const std::vector<std::uint32_t>& labels, double reg_weight) {
    const std::size_t nb = t.probs.rows;
    LossTerms terms;
    for (std::size_t i = 0; i < nb; ++i) {
        if (labels[i] >= p.dims.classes)
            throw validation_error("loss: label out of range at sample " + std::to_string(i));
        terms.cross_entropy -= std::log(std::max(t.probs(i, labels[i]), kProbFloor));
    }
    terms.cross_entropy /= static_cast<double>(nb);

    if (reg_weight != 0.0 && is_complex_variant(p.variant)) {
        const std::size_t d = p.dims.hilbert_dim;
        double acc = 0.0;
        for (std::size_t i = 0; i < nb; ++i) {
            ComplexVector psi(d);
            std::copy(t.out_re.row(i), t.out_re.row(i) + d, psi.re.begin());
            std::copy(t.out_im.row(i), t.out_im.row(i) + d, psi.im.begin());
            acc += phase_variance(psi);
        }
        terms.phase_variance = acc / static_cast<double>(nb);
    }
    return terms;
}

inline Rng dropout_rng(std::uint64_t dropout_seed) {
    return Rng(derive_stream(dropout_seed, "dropout-mask"));
}

} // namespace detail

// Forward-only training loss; the finite-difference oracle evaluates this.
// For MC-Dropout, dropout_seed pins the mask so repeated calls are
// deterministic.
inline double training_loss(const HeadParameters& p, const RealMatrix& features,
                            const std::vector<std::uint32_t>& labels, double reg_weight,
                            std::uint64_t dropout_seed = 0) {
    const bool dropout = p.variant == HeadVariant::MCDropout && p.dropout_rate > 0.0;
    Rng rng = detail::dropout_rng(dropout_seed);
    detail::ForwardTrace t;
    detail::forward_pass(p, features, dropout ? &rng : nullptr, t);
    return detail::loss_from_trace(p, t, labels, reg_weight).total(reg_weight);
}

struct BackwardResult {
    double loss = 0.0;
    Gradients grads;
};

// Analytic reverse-mode gradients of the batch loss
//   L = mean CE - reg_weight * mean Var(phases of ψ')
// for every trainable tensor of the active variant, including the generator
// A through the Cayley map via dU = -(I+U) dS (I+S)^-1.
inline BackwardResult backward(const HeadParameters& p, const RealMatrix& features,
                               const std::vector<std::uint32_t>& labels, double reg_weight,
                               std::uint64_t dropout_seed = 0) {
    const std::size_t nb = features.rows;
    if (labels.size() != nb) throw dimension_error("backward: label count mismatch");
    const std::size_t c = p.dims.classes;
    const HeadVariant v = p.variant;

    const bool dropout = v == HeadVariant::MCDropout && p.dropout_rate > 0.0;
    Rng rng = detail::dropout_rng(dropout_seed);
    detail::ForwardTrace t;
    detail::forward_pass(p, features, dropout ? &rng : nullptr, t);

    const auto terms = detail::loss_from_trace(p, t, labels, reg_weight);

    BackwardResult result;
    result.loss = terms.total(reg_weight);
    result.grads = Gradients::zeros_like(p);
    Gradients& g = result.grads;
    const double inv_nb = 1.0 / static_cast<double>(nb);

    if (!is_complex_variant(v)) {
        // Softmax-family heads: dz = (p - onehot) / nb.
        RealMatrix dz(nb, c);
        for (std::size_t i = 0; i < nb; ++i) {
            const double* prow = t.probs.row(i);
            double* drow = dz.row(i);
            for (std::size_t k = 0; k < c; ++k)
                drow[k] = (prow[k] - (labels[i] == k ? 1.0 : 0.0)) * inv_nb;
        }
        const RealMatrix& cls_input = uses_hidden_layer(v) ? t.hidden_act : features;
        g.cls_w = matmul(transpose(dz), cls_input);
        for (std::size_t i = 0; i < nb; ++i) {
            const double* drow = dz.row(i);
            for (std::size_t k = 0; k < c; ++k) g.cls_b[k] += drow[k];
        }
        if (uses_hidden_layer(v)) {
            RealMatrix dh = matmul(dz, p.cls_w);  // n_b x h
            if (dropout)
                for (std::size_t i = 0; i < dh.data.size(); ++i)
                    dh.data[i] *= t.dropout_mask.data[i];
            for (std::size_t i = 0; i < dh.data.size(); ++i)
                if (t.hidden_pre.data[i] <= 0.0) dh.data[i] = 0.0;
            g.hid_w = matmul(transpose(dh), features);
            for (std::size_t i = 0; i < nb; ++i) {
                const double* drow = dh.row(i);
                for (std::size_t j = 0; j < p.dims.hidden; ++j) g.hid_b[j] += drow[j];
            }
        }
        return result;
    }

    // Complex variants. Accumulate dL/dψ' (split parts) first.
    const std::size_t d = p.dims.hilbert_dim;
    RealMatrix d_out_re(nb, d);
    RealMatrix d_out_im(nb, d);

    if (uses_born(v)) {
        // dL/d amp through p_k = q_k / Z with q_k = |amp_k|^2.
        RealMatrix d_amp_re(nb, c);
        RealMatrix d_amp_im(nb, c);
        for (std::size_t i = 0; i < nb; ++i) {
            const double* ar = t.amp_re.row(i);
            const double* ai = t.amp_im.row(i);
            const double inv_denom = 1.0 / t.born_denom[i];
            const std::uint32_t y = labels[i];
            const double q_y = ar[y] * ar[y] + ai[y] * ai[y];
            for (std::size_t k = 0; k < c; ++k) {
                double dq = inv_denom;
                if (k == y) dq -= 1.0 / std::max(q_y, 1e-300);
                dq *= inv_nb;
                d_amp_re(i, k) = dq * 2.0 * ar[k];
                d_amp_im(i, k) = dq * 2.0 * ai[k];
            }
        }
        const RealMatrix m_re = detail::measurement_matrix_re(p.measurements);
        const RealMatrix m_im = detail::measurement_matrix_im(p.measurements);
        // amp_re = ψ're·m_re^T + ψ'im·m_im^T ; amp_im = ψ'im·m_re^T - ψ're·m_im^T
        d_out_re = matmul(d_amp_re, m_re);
        const RealMatrix term_re = matmul(d_amp_im, m_im);
        d_out_im = matmul(d_amp_im, m_re);
        const RealMatrix term_im = matmul(d_amp_re, m_im);
        for (std::size_t i = 0; i < d_out_re.data.size(); ++i) {
            d_out_re.data[i] -= term_re.data[i];
            d_out_im.data[i] += term_im.data[i];
        }
        const RealMatrix dm_re_a = matmul(transpose(d_amp_re), t.out_re);
        const RealMatrix dm_re_b = matmul(transpose(d_amp_im), t.out_im);
        const RealMatrix dm_im_a = matmul(transpose(d_amp_re), t.out_im);
        const RealMatrix dm_im_b = matmul(transpose(d_amp_im), t.out_re);
        for (std::size_t k = 0; k < c; ++k) {
            auto& mk = g.measurements.vectors[k];
            for (std::size_t j = 0; j < d; ++j) {
                mk.re[j] = dm_re_a(k, j) + dm_re_b(k, j);
                mk.im[j] = dm_im_a(k, j) - dm_im_b(k, j);
            }
        }
    } else {
        // Magnitude-softmax readout.
        RealMatrix dz(nb, c);
        for (std::size_t i = 0; i < nb; ++i) {
            const double* prow = t.probs.row(i);
            double* drow = dz.row(i);
            for (std::size_t k = 0; k < c; ++k)
                drow[k] = (prow[k] - (labels[i] == k ? 1.0 : 0.0)) * inv_nb;
        }
        g.cls_w = matmul(transpose(dz), t.mags);
        for (std::size_t i = 0; i < nb; ++i) {
            const double* drow = dz.row(i);
            for (std::size_t k = 0; k < c; ++k) g.cls_b[k] += drow[k];
        }
        const RealMatrix d_mag = matmul(dz, p.cls_w);  // n_b x d
        for (std::size_t i = 0; i < nb * d; ++i) {
            const double mag = t.mags.data[i];
            if (mag > 1e-30) {
                const double scale = d_mag.data[i] / mag;
                d_out_re.data[i] = scale * t.out_re.data[i];
                d_out_im.data[i] = scale * t.out_im.data[i];
            }
        }
    }

    // Phase regulariser: L -= reg_weight * mean Var(θ), θ_j = atan2(im, re).
    if (reg_weight != 0.0) {
        for (std::size_t i = 0; i < nb; ++i) {
            const double* re = t.out_re.row(i);
            const double* im = t.out_im.row(i);
            double sum = 0.0;
            double sum_sq = 0.0;
            std::size_t count = 0;
            std::vector<double> theta(d, 0.0);
            std::vector<bool> valid(d, false);
            for (std::size_t j = 0; j < d; ++j) {
                if (std::sqrt(re[j] * re[j] + im[j] * im[j]) < 1e-12) continue;
                theta[j] = std::atan2(im[j], re[j]);
                valid[j] = true;
                sum += theta[j];
                sum_sq += theta[j] * theta[j];
                ++count;
            }
            if (count < 2) continue;
            const double inv_count = 1.0 / static_cast<double>(count);
            const double mean = sum * inv_count;
            const double coeff = -reg_weight * inv_nb * 2.0 * inv_count;
            double* dre = d_out_re.row(i);
            double* dim_row = d_out_im.row(i);
            for (std::size_t j = 0; j < d; ++j) {
                if (!valid[j]) continue;
                const double dvar_dtheta = theta[j] - mean;
                const double r_sq = re[j] * re[j] + im[j] * im[j];
                dre[j] += coeff * dvar_dtheta * (-im[j] / r_sq);
                dim_row[j] += coeff * dvar_dtheta * (re[j] / r_sq);
            }
        }
    }

    // Through the unitary: ψ' = Uψ, so dψ = U^T dψ' and dU = Σ dψ' ψ^T.
    RealMatrix d_psi_re;
    RealMatrix d_psi_im;
    if (uses_unitary(v)) {
        d_psi_re = matmul(d_out_re, t.unitary);
        d_psi_im = matmul(d_out_im, t.unitary);

        RealMatrix d_unitary = matmul(transpose(d_out_re), t.psi_re);
        const RealMatrix d_unitary_im = matmul(transpose(d_out_im), t.psi_im);
        for (std::size_t i = 0; i < d_unitary.data.size(); ++i)
            d_unitary.data[i] += d_unitary_im.data[i];

        // dL/dS = -(I+U)^T dL/dU (I-S)^-1, solved via (I+S) X^T = (dL/dU)^T.
        RealMatrix plus = RealMatrix::identity(d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) plus(i, j) += t.skew(i, j);
        const RealMatrix solved_t = lu_solve(plus, transpose(d_unitary));
        RealMatrix i_plus_u_t = transpose(t.unitary);
        for (std::size_t i = 0; i < d; ++i) i_plus_u_t(i, i) += 1.0;
        RealMatrix d_skew = matmul(i_plus_u_t, transpose(solved_t));
        for (double& x : d_skew.data) x = -x;

        // S = A - A^T.
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                g.unitary_gen(i, j) = d_skew(i, j) - d_skew(j, i);
    } else {
        d_psi_re = std::move(d_out_re);
        d_psi_im = std::move(d_out_im);
    }

    // Through normalisation: ψ = ψ0 / |ψ0| over the joint re/im vector.
    RealMatrix d_psi0_re(nb, d);
    RealMatrix d_psi0_im(nb, d);
    for (std::size_t i = 0; i < nb; ++i) {
        const double* pre = t.psi_re.row(i);
        const double* pim = t.psi_im.row(i);
        const double* gre = d_psi_re.row(i);
        const double* gim = d_psi_im.row(i);
        double radial = 0.0;
        for (std::size_t j = 0; j < d; ++j) radial += pre[j] * gre[j] + pim[j] * gim[j];
        const double inv = t.inv_norm[i];
        double* ore = d_psi0_re.row(i);
        double* oim = d_psi0_im.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            ore[j] = inv * (gre[j] - radial * pre[j]);
            oim[j] = inv * (gim[j] - radial * pim[j]);
        }
    }

    // Through the projection: ψ0 = (proj_re + i proj_im) f.
    g.proj_re = matmul(transpose(d_psi0_re), features);
    g.proj_im = matmul(transpose(d_psi0_im), features);
    return result;
}

struct TrainResult {
    HeadParameters params;
    std::vector<double> epoch_loss;       // per-epoch mean training loss
    double seconds = 0.0;                 // wall clock, monotonic
    double epoch_seconds_mean = 0.0;
};

// Mini-batch training loop: per batch project -> skew -> Cayley -> evolve ->
// readout -> cross-entropy, with the phase regulariser ramping in after the
// warmup. Deterministic per (variant, dims, schedule, seed).
inline TrainResult train(HeadVariant variant, const HeadDims& dims, const FeatureDataset& data,
                         const TrainSchedule& schedule, std::uint64_t seed) {
    schedule.validate();
    data.validate();
    if (data.size() == 0) throw validation_error("train: empty dataset");
    if (data.dim() != dims.feature_dim)
        throw dimension_error("train: dataset feature dim does not match head dims");
    if (data.n_classes != dims.classes)
        throw dimension_error("train: dataset class count does not match head dims");

    const auto t_start = std::chrono::steady_clock::now();

    TrainResult result;
    result.params = build_head(variant, dims, seed);
    AdamState adam = AdamState::init(result.params);

    Rng shuffle_rng(derive_stream(seed, "train/shuffle"));
    Rng dropout_seeds(derive_stream(seed, "train/dropout"));

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    const std::size_t n = data.size();
    const std::size_t bs = schedule.batch_size;
    RealMatrix batch_features;
    std::vector<std::uint32_t> batch_labels;

    for (std::size_t epoch = 1; epoch <= schedule.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        const double reg = (is_complex_variant(variant) && schedule.phase_regulariser)
                               ? ramp_weight(epoch, schedule)
                               : 0.0;
        double loss_sum = 0.0;
        for (std::size_t start = 0, batch_index = 0; start < n; start += bs, ++batch_index) {
            const std::size_t count = std::min(bs, n - start);
            batch_features = RealMatrix(count, data.dim());
            batch_labels.resize(count);
            for (std::size_t r = 0; r < count; ++r) {
                const std::size_t src = order[start + r];
                std::copy(data.features.row(src), data.features.row(src) + data.dim(),
                          batch_features.row(r));
                batch_labels[r] = data.labels[src];
            }
            const std::uint64_t drop_seed = dropout_seeds.next_u64();
            try {
                auto [loss, grads] =
                    backward(result.params, batch_features, batch_labels, reg, drop_seed);
                adam_step(result.params, grads, adam, schedule.learning_rate);
                loss_sum += loss * static_cast<double>(count);
            } catch (const numeric_error& err) {
                throw numeric_error("train: epoch " + std::to_string(epoch) + " batch " +
                                    std::to_string(batch_index) + ": " + err.what());
            }
        }
        result.epoch_loss.push_back(loss_sum / static_cast<double>(n));
    }

    const auto t_end = std::chrono::steady_clock::now();
    result.seconds = std::chrono::duration<double>(t_end - t_start).count();
    result.epoch_seconds_mean = result.seconds / static_cast<double>(schedule.epochs);
    return result;
}

} // namespace wavehead
