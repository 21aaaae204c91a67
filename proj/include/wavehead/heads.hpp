#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wavehead/errors.hpp"
#include "wavehead/linalg.hpp"
#include "wavehead/rng.hpp"

namespace wavehead {

// The six ablation variants plus the two baseline heads.
enum class HeadVariant {
    FullWave,       // complex projection -> Cayley unitary -> Born readout
    NoBorn,         // complex projection -> Cayley unitary -> magnitude softmax
    NoUnitary,      // complex projection -> Born readout
    ComplexLinear,  // complex projection -> magnitude softmax
    Softmax,        // linear + softmax on raw features
    Softmax2x,      // hidden ReLU layer + softmax
    MCDropout,      // hidden ReLU layer with dropout, averaged at eval
    EnergyLinear,   // Softmax twin whose logits feed the energy score
};

inline const char* to_string(HeadVariant v) {
    switch (v) {
        case HeadVariant::FullWave: return "FullWave";
        case HeadVariant::NoBorn: return "NoBorn";
        case HeadVariant::NoUnitary: return "NoUnitary";
        case HeadVariant::ComplexLinear: return "ComplexLinear";
        case HeadVariant::Softmax: return "Softmax";
        case HeadVariant::Softmax2x: return "Softmax2x";
        case HeadVariant::MCDropout: return "MCDropout";
        case HeadVariant::EnergyLinear: return "EnergyLinear";
    }
    return "?";
}

inline HeadVariant head_variant_from_string(std::string_view tag) {
    for (HeadVariant v : {HeadVariant::FullWave, HeadVariant::NoBorn, HeadVariant::NoUnitary,
                          HeadVariant::ComplexLinear, HeadVariant::Softmax, HeadVariant::Softmax2x,
                          HeadVariant::MCDropout, HeadVariant::EnergyLinear})
        if (tag == to_string(v)) return v;
    throw validation_error("unknown head variant: " + std::string(tag));
}

inline bool is_complex_variant(HeadVariant v) {
    return v == HeadVariant::FullWave || v == HeadVariant::NoBorn ||
           v == HeadVariant::NoUnitary || v == HeadVariant::ComplexLinear;
}

inline bool uses_unitary(HeadVariant v) {
    return v == HeadVariant::FullWave || v == HeadVariant::NoBorn;
}

inline bool uses_born(HeadVariant v) {
    return v == HeadVariant::FullWave || v == HeadVariant::NoUnitary;
}

inline bool uses_hidden_layer(HeadVariant v) {
    return v == HeadVariant::Softmax2x || v == HeadVariant::MCDropout;
}

// Born readout has no pre-softmax logits; MC-Dropout averaging discards them.
inline bool produces_logits(HeadVariant v) {
    return !uses_born(v) && v != HeadVariant::MCDropout;
}

struct HeadDims {
    std::size_t feature_dim = 0;  // n
    std::size_t hilbert_dim = 0;  // d
    std::size_t classes = 0;      // C
    std::size_t hidden = 0;       // h, MLP variants only
};

// Number of stochastic eval passes averaged by the MC-Dropout head.
inline constexpr std::size_t kMcDropoutEvalPasses = 20;
inline constexpr double kMcDropoutRate = 0.2;

// Only the tensors a variant uses are allocated; the rest stay empty.
struct HeadParameters {
    HeadVariant variant = HeadVariant::Softmax;
    HeadDims dims;
    std::uint64_t seed = 0;
    double dropout_rate = 0.0;

    RealMatrix proj_re;      // d x n complex projection, real part
    RealMatrix proj_im;      // d x n complex projection, imaginary part
    RealMatrix unitary_gen;  // d x d generator; skew + Cayley give the unitary
    MeasurementSet measurements;  // C vectors in C^d (Born variants)
    RealMatrix hid_w;        // h x n hidden layer (MLP variants)
    std::vector<double> hid_b;
    RealMatrix cls_w;        // classifier: C x d (complex), C x n (linear), C x h (MLP)
    std::vector<double> cls_b;
};

inline std::size_t parameter_count(const HeadParameters& p) {
    std::size_t total = 0;
    total += p.proj_re.data.size() + p.proj_im.data.size();
    total += p.unitary_gen.data.size();
    for (const auto& m : p.measurements.vectors) total += 2 * m.dim();
    total += p.hid_w.data.size() + p.hid_b.size();
    total += p.cls_w.data.size() + p.cls_b.size();
    return total;
}

// Deterministic initialisation. Each tensor draws from its own derived
// stream, so variants sharing a tensor (e.g. FullWave and NoUnitary both
// have a projection) initialise it identically for the same (dims, seed).
inline HeadParameters build_head(HeadVariant variant, const HeadDims& dims, std::uint64_t seed) {
    const std::size_t n = dims.feature_dim;
    const std::size_t d = dims.hilbert_dim;
    const std::size_t c = dims.classes;
    const std::size_t h = dims.hidden;

    if (n < 1 || c < 1) throw validation_error("build_head: feature_dim and classes must be >= 1");
    if (is_complex_variant(variant) && d < 1)
        throw validation_error("build_head: hilbert_dim must be >= 1 for complex variants");
    if (uses_born(variant) && c < 2)
        throw validation_error("build_head: Born readout needs at least 2 classes");
    if (uses_hidden_layer(variant) && h == 0)
        throw validation_error("build_head: hidden width required for " +
                               std::string(to_string(variant)));

    HeadParameters p;
    p.variant = variant;
    p.dims = dims;
    p.seed = seed;

    auto fill_uniform = [&](RealMatrix& m, std::size_t rows, std::size_t cols,
                            std::string_view label, double bound) {
        m = RealMatrix(rows, cols);
        Rng rng(derive_stream(seed, label));
        for (double& v : m.data) v = rng.uniform(-bound, bound);
    };

    if (is_complex_variant(variant)) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(n));
        fill_uniform(p.proj_re, d, n, "init/proj_re", bound);
        fill_uniform(p.proj_im, d, n, "init/proj_im", bound);
    }
    if (uses_unitary(variant)) {
        p.unitary_gen = RealMatrix(d, d);
        Rng rng(derive_stream(seed, "init/unitary_gen"));
        for (double& v : p.unitary_gen.data) v = 0.01 * rng.gaussian();
    }
    if (uses_born(variant)) {
        Rng rng(derive_stream(seed, "init/measurements"));
        p.measurements.vectors.reserve(c);
        for (std::size_t k = 0; k < c; ++k) {
            ComplexVector m(d);
            for (std::size_t i = 0; i < d; ++i) {
                m.re[i] = rng.gaussian();
                m.im[i] = rng.gaussian();
            }
            p.measurements.vectors.push_back(normalize(m));
        }
    }
    if (uses_hidden_layer(variant)) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(n));
        fill_uniform(p.hid_w, h, n, "init/hid_w", bound);
        p.hid_b.assign(h, 0.0);
        if (variant == HeadVariant::MCDropout) p.dropout_rate = kMcDropoutRate;
    }

    // Classifier starts at zero: the head predicts the uniform distribution,
    // a calibrated starting point.
    if (!uses_born(variant)) {
        std::size_t in_dim = 0;
        if (is_complex_variant(variant)) in_dim = d;
        else if (uses_hidden_layer(variant)) in_dim = h;
        else in_dim = n;
        p.cls_w = RealMatrix(c, in_dim);
        p.cls_b.assign(c, 0.0);
    }
    return p;
}

struct PredictionBatch {
    RealMatrix probs;                  // n x C, row-stochastic
    std::optional<RealMatrix> logits;  // absent for Born readout and MC-Dropout averages
};

// Numerically safe row softmax with max subtraction.
inline void softmax_row(const double* logits, double* probs, std::size_t c) {
    double peak = logits[0];
    for (std::size_t k = 1; k < c; ++k) peak = std::max(peak, logits[k]);
    double denom = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
        probs[k] = std::exp(logits[k] - peak);
        denom += probs[k];
    }
    const double inv = 1.0 / denom;
    for (std::size_t k = 0; k < c; ++k) probs[k] *= inv;
}

// ψ = normalize(W_re f + i W_im f).
inline ComplexVector project_complex(const HeadParameters& p, const std::vector<double>& f) {
    if (p.proj_re.rows == 0) throw validation_error("project_complex: head has no projection");
    return normalize(ComplexVector(mat_vec(p.proj_re, f), mat_vec(p.proj_im, f)));
}

// p_k = |<m_k|ψ'>|^2 / Σ_j |<m_j|ψ'>|^2.
inline std::vector<double> born_readout(const ComplexVector& psi, const MeasurementSet& meas) {
    meas.validate();
    if (meas.dim() != psi.dim()) throw dimension_error("born_readout: dimension mismatch");
    std::vector<double> weights(meas.count());
    double denom = 0.0;
    for (std::size_t k = 0; k < meas.count(); ++k) {
        const auto amp = hermitian_inner(meas.vectors[k], psi);
        weights[k] = std::norm(amp);
        denom += weights[k];
    }
    if (!(denom > 1e-30))
        throw measurement_collapse_error("born_readout: all measurements orthogonal to state");
    const double inv = 1.0 / denom;
    for (double& w : weights) w *= inv;
    return weights;
}

// z = W_c |ψ'| + b_c, p = softmax(z).
inline std::pair<std::vector<double>, std::vector<double>> magnitude_softmax_readout(
    const ComplexVector& psi, const RealMatrix& cls_w, const std::vector<double>& cls_b) {
    if (cls_w.cols != psi.dim() || cls_w.rows != cls_b.size())
        throw dimension_error("magnitude_softmax_readout: dimension mismatch");
    std::vector<double> logits = mat_vec(cls_w, magnitude(psi));
    for (std::size_t k = 0; k < logits.size(); ++k) logits[k] += cls_b[k];
    std::vector<double> probs(logits.size());
    softmax_row(logits.data(), probs.data(), logits.size());
    return {probs, logits};
}

enum class ForwardMode { Train, Eval };

namespace detail {

inline RealMatrix measurement_matrix_re(const MeasurementSet& m) {
    RealMatrix out(m.count(), m.dim());
    for (std::size_t k = 0; k < m.count(); ++k)
        std::copy(m.vectors[k].re.begin(), m.vectors[k].re.end(), out.row(k));
    return out;
}

inline RealMatrix measurement_matrix_im(const MeasurementSet& m) {
    RealMatrix out(m.count(), m.dim());
    for (std::size_t k = 0; k < m.count(); ++k)
        std::copy(m.vectors[k].im.begin(), m.vectors[k].im.end(), out.row(k));
    return out;
}

// Intermediates of one batched pass, kept for the analytic backward.
struct ForwardTrace {
    // complex pipeline
    RealMatrix psi0_re, psi0_im;        // pre-normalisation states
    std::vector<double> inv_norm;       // per-sample 1/|ψ0|
    RealMatrix psi_re, psi_im;          // normalised states
    RealMatrix unitary;                 // U (unitary variants)
    RealMatrix skew;                    // S = A - A^T
    RealMatrix out_re, out_im;          // evolved states ψ'
    // Born readout
    RealMatrix amp_re, amp_im;          // inner products per class
    std::vector<double> born_denom;
    // magnitude softmax readout
    RealMatrix mags;                    // |ψ'| rows
    // MLP pipeline
    RealMatrix hidden_pre, hidden_act;  // pre/post ReLU (mask folded into act)
    RealMatrix dropout_mask;            // inverted-dropout scale factors
    // outputs
    RealMatrix logits;
    RealMatrix probs;
};

// One deterministic pass. For MC-Dropout a non-null rng draws the mask
// (inverted dropout); rng == nullptr means no dropout (rate 0 only).
inline void forward_pass(const HeadParameters& p, const RealMatrix& features, Rng* rng,
                         ForwardTrace& t) {
    const std::size_t nb = features.rows;
    const std::size_t c = p.dims.classes;
    const HeadVariant v = p.variant;

    if (features.cols != p.dims.feature_dim)
        throw dimension_error("forward: feature dimension mismatch");

    if (is_complex_variant(v)) {
        const std::size_t d = p.dims.hilbert_dim;
        t.psi0_re = matmul_transposed(features, p.proj_re);
        t.psi0_im = matmul_transposed(features, p.proj_im);
        t.inv_norm.assign(nb, 0.0);
        t.psi_re = RealMatrix(nb, d);
        t.psi_im = RealMatrix(nb, d);
        for (std::size_t i = 0; i < nb; ++i) {
            double sq = 0.0;
            const double* r0 = t.psi0_re.row(i);
            const double* i0 = t.psi0_im.row(i);
            for (std::size_t j = 0; j < d; ++j) sq += r0[j] * r0[j] + i0[j] * i0[j];
            const double norm = std::sqrt(sq);
            if (!(norm > 1e-12))
                throw degenerate_state_error("forward: degenerate state at sample " +
                                             std::to_string(i));
            const double inv = 1.0 / norm;
            t.inv_norm[i] = inv;
            double* r1 = t.psi_re.row(i);
            double* i1 = t.psi_im.row(i);
            for (std::size_t j = 0; j < d; ++j) {
                r1[j] = r0[j] * inv;
                i1[j] = i0[j] * inv;
            }
        }

        if (uses_unitary(v)) {
            t.skew = skew_symmetrize(p.unitary_gen);
            t.unitary = cayley(t.skew);
            t.out_re = matmul_transposed(t.psi_re, t.unitary);
            t.out_im = matmul_transposed(t.psi_im, t.unitary);
        } else {
            t.out_re = t.psi_re;
            t.out_im = t.psi_im;
        }

        if (uses_born(v)) {
            const RealMatrix m_re = measurement_matrix_re(p.measurements);
            const RealMatrix m_im = measurement_matrix_im(p.measurements);
            // amp_k = <m_k|ψ'>: re = m_re·ψ're + m_im·ψ'im, im = m_re·ψ'im - m_im·ψ're
            t.amp_re = matmul_transposed(t.out_re, m_re);
            const RealMatrix tmp_re = matmul_transposed(t.out_im, m_im);
            t.amp_im = matmul_transposed(t.out_im, m_re);
            const RealMatrix tmp_im = matmul_transposed(t.out_re, m_im);
            for (std::size_t i = 0; i < t.amp_re.data.size(); ++i) {
                t.amp_re.data[i] += tmp_re.data[i];
                t.amp_im.data[i] -= tmp_im.data[i];
            }
            t.born_denom.assign(nb, 0.0);
            t.probs = RealMatrix(nb, c);
            for (std::size_t i = 0; i < nb; ++i) {
                const double* ar = t.amp_re.row(i);
                const double* ai = t.amp_im.row(i);
                double denom = 0.0;
                double* prow = t.probs.row(i);
                for (std::size_t k = 0; k < c; ++k) {
                    prow[k] = ar[k] * ar[k] + ai[k] * ai[k];
                    denom += prow[k];
                }
                if (!(denom > 1e-30))
                    throw measurement_collapse_error(
                        "forward: measurement collapse at sample " + std::to_string(i));
                t.born_denom[i] = denom;
                const double inv = 1.0 / denom;
                for (std::size_t k = 0; k < c; ++k) prow[k] *= inv;
            }
        } else {
            const std::size_t d = p.dims.hilbert_dim;
            t.mags = RealMatrix(nb, d);
            for (std::size_t i = 0; i < nb * d; ++i)
                t.mags.data[i] = std::sqrt(t.out_re.data[i] * t.out_re.data[i] +
                                           t.out_im.data[i] * t.out_im.data[i]);
            t.logits = matmul_transposed(t.mags, p.cls_w);
            for (std::size_t i = 0; i < nb; ++i) {
                double* z = t.logits.row(i);
                for (std::size_t k = 0; k < c; ++k) z[k] += p.cls_b[k];
            }
            t.probs = RealMatrix(nb, c);
            for (std::size_t i = 0; i < nb; ++i)
                softmax_row(t.logits.row(i), t.probs.row(i), c);
        }
        return;
    }

    if (uses_hidden_layer(v)) {
        const std::size_t h = p.dims.hidden;
        t.hidden_pre = matmul_transposed(features, p.hid_w);
        for (std::size_t i = 0; i < nb; ++i) {
            double* row = t.hidden_pre.row(i);
            for (std::size_t j = 0; j < h; ++j) row[j] += p.hid_b[j];
        }
        t.hidden_act = t.hidden_pre;
        for (double& x : t.hidden_act.data) x = std::max(0.0, x);

        if (p.dropout_rate > 0.0) {
            if (rng == nullptr)
                throw validation_error("forward: dropout active but no rng supplied");
            const double keep = 1.0 - p.dropout_rate;
            t.dropout_mask = RealMatrix(nb, h);
            for (std::size_t i = 0; i < nb * h; ++i)
                t.dropout_mask.data[i] = rng->next_double() < keep ? 1.0 / keep : 0.0;
            for (std::size_t i = 0; i < nb * h; ++i) t.hidden_act.data[i] *= t.dropout_mask.data[i];
        }
        t.logits = matmul_transposed(t.hidden_act, p.cls_w);
    } else {
        t.logits = matmul_transposed(features, p.cls_w);
    }
    for (std::size_t i = 0; i < nb; ++i) {
        double* z = t.logits.row(i);
        for (std::size_t k = 0; k < c; ++k) z[k] += p.cls_b[k];
    }
    t.probs = RealMatrix(nb, c);
    for (std::size_t i = 0; i < nb; ++i) softmax_row(t.logits.row(i), t.probs.row(i), c);
}

} // namespace detail

// Batched forward pass. Train mode runs one stochastic pass; eval mode
// averages kMcDropoutEvalPasses stochastic passes for the MC-Dropout head
// (a single deterministic pass when the dropout rate is zero).
inline PredictionBatch forward(const HeadParameters& p, const RealMatrix& features,
                               ForwardMode mode, Rng* rng = nullptr) {
    const bool dropout_active = p.variant == HeadVariant::MCDropout && p.dropout_rate > 0.0;

    if (p.variant == HeadVariant::MCDropout && mode == ForwardMode::Eval && dropout_active) {
        if (rng == nullptr)
            throw validation_error("forward: MC-Dropout eval requires an rng");
        RealMatrix mean_probs(features.rows, p.dims.classes);
        detail::ForwardTrace t;
        for (std::size_t pass = 0; pass < kMcDropoutEvalPasses; ++pass) {
            detail::forward_pass(p, features, rng, t);
            for (std::size_t i = 0; i < mean_probs.data.size(); ++i)
                mean_probs.data[i] += t.probs.data[i];
        }
        const double inv = 1.0 / static_cast<double>(kMcDropoutEvalPasses);
        for (double& x : mean_probs.data) x *= inv;
        return PredictionBatch{std::move(mean_probs), std::nullopt};
    }

    detail::ForwardTrace t;
    detail::forward_pass(p, features, dropout_active ? rng : nullptr, t);
    PredictionBatch out;
    out.probs = std::move(t.probs);
    if (produces_logits(p.variant)) out.logits = std::move(t.logits);
    return out;
}

} // namespace wavehead
