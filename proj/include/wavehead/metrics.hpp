#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "wavehead/errors.hpp"
#include "wavehead/heads.hpp"
#include "wavehead/linalg.hpp"

namespace wavehead {

// Shared probability floor for NLL and KL so the two metrics clamp alike.
inline constexpr double kProbFloor = 1e-12;

inline std::size_t argmax_row(const double* row, std::size_t c) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k)
        if (row[k] > row[best]) best = k;
    return best;
}

inline double accuracy(const RealMatrix& probs, const std::vector<std::uint32_t>& labels) {
    if (probs.rows == 0) throw validation_error("accuracy: empty batch");
    if (probs.rows != labels.size()) throw dimension_error("accuracy: label count mismatch");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < probs.rows; ++i)
        if (argmax_row(probs.row(i), probs.cols) == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(probs.rows);
}

// Equal-width confidence bins; bin b covers [b/B, (b+1)/B), the last bin
// closed at 1 so confidence exactly 1.0 lands in the top bin.
struct ReliabilityBins {
    std::size_t bin_count = 0;
    std::size_t total = 0;
    std::vector<std::size_t> counts;
    std::vector<double> mean_confidence;  // 0 for empty bins
    std::vector<double> mean_accuracy;    // 0 for empty bins
};

inline std::pair<double, ReliabilityBins> ece(const RealMatrix& probs,
                                              const std::vector<std::uint32_t>& labels,
                                              std::size_t bins = 15) {
    if (probs.rows == 0) throw validation_error("ece: empty batch");
    if (probs.rows != labels.size()) throw dimension_error("ece: label count mismatch");
    if (bins == 0) throw validation_error("ece: bin count must be positive");

    std::vector<double> conf_sum(bins, 0.0);
    std::vector<double> acc_sum(bins, 0.0);
    std::vector<std::size_t> counts(bins, 0);

    for (std::size_t i = 0; i < probs.rows; ++i) {
        const double* row = probs.row(i);
        const std::size_t pred = argmax_row(row, probs.cols);
        const double conf = row[pred];
        std::size_t b = static_cast<std::size_t>(conf * static_cast<double>(bins));
        if (b >= bins) b = bins - 1;
        counts[b] += 1;
        conf_sum[b] += conf;
        acc_sum[b] += (pred == labels[i]) ? 1.0 : 0.0;
    }

    ReliabilityBins rb;
    rb.bin_count = bins;
    rb.total = probs.rows;
    rb.counts = counts;
    rb.mean_confidence.assign(bins, 0.0);
    rb.mean_accuracy.assign(bins, 0.0);

    double value = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        if (counts[b] == 0) continue;
        const double inv = 1.0 / static_cast<double>(counts[b]);
        rb.mean_confidence[b] = conf_sum[b] * inv;
        rb.mean_accuracy[b] = acc_sum[b] * inv;
        const double weight = static_cast<double>(counts[b]) / static_cast<double>(rb.total);
        value += weight * std::abs(rb.mean_accuracy[b] - rb.mean_confidence[b]);
    }
    return {value, rb};
}

inline double nll(const RealMatrix& probs, const std::vector<std::uint32_t>& labels) {
    if (probs.rows == 0) throw validation_error("nll: empty batch");
    if (probs.rows != labels.size()) throw dimension_error("nll: label count mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.rows; ++i) {
        if (labels[i] >= probs.cols)
            throw validation_error("nll: label out of range at sample " + std::to_string(i));
        acc -= std::log(std::max(probs(i, labels[i]), kProbFloor));
    }
    return acc / static_cast<double>(probs.rows);
}

inline double brier(const RealMatrix& probs, const std::vector<std::uint32_t>& labels) {
    if (probs.rows == 0) throw validation_error("brier: empty batch");
    if (probs.rows != labels.size()) throw dimension_error("brier: label count mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.rows; ++i) {
        const double* row = probs.row(i);
        for (std::size_t k = 0; k < probs.cols; ++k) {
            const double target = (labels[i] == k) ? 1.0 : 0.0;
            const double diff = row[k] - target;
            acc += diff * diff;
        }
    }
    return acc / static_cast<double>(probs.rows);
}

// Mean KL(q || p) against reference distributions q, with 0·log 0 := 0.
inline double kl_to_soft(const RealMatrix& probs, const RealMatrix& soft_labels) {
    if (probs.rows == 0) throw validation_error("kl_to_soft: empty batch");
    if (probs.rows != soft_labels.rows || probs.cols != soft_labels.cols)
        throw dimension_error("kl_to_soft: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.rows; ++i) {
        const double* q = soft_labels.row(i);
        const double* p = probs.row(i);
        double qsum = 0.0;
        double psum = 0.0;
        double row_kl = 0.0;
        for (std::size_t k = 0; k < probs.cols; ++k) {
            qsum += q[k];
            psum += p[k];
            if (q[k] > 0.0) row_kl += q[k] * std::log(q[k] / std::max(p[k], kProbFloor));
        }
        if (std::abs(qsum - 1.0) > 1e-6 || std::abs(psum - 1.0) > 1e-6)
            throw validation_error("kl_to_soft: row " + std::to_string(i) +
                                   " is not a probability distribution");
        acc += row_kl;
    }
    return acc / static_cast<double>(probs.rows);
}

// Mann-Whitney AUROC with midrank tie handling: the fraction of (ID, OOD)
// pairs ranked correctly, ties counted as 1/2. Higher score = more ID.
inline double auroc(const std::vector<double>& id_scores, const std::vector<double>& ood_scores) {
    if (id_scores.empty() || ood_scores.empty())
        throw validation_error("auroc: both score sets must be non-empty");

    struct Entry {
        double score;
        bool is_id;
    };
    std::vector<Entry> all;
    all.reserve(id_scores.size() + ood_scores.size());
    for (double s : id_scores) all.push_back({s, true});
    for (double s : ood_scores) all.push_back({s, false});
    std::sort(all.begin(), all.end(),
              [](const Entry& a, const Entry& b) { return a.score < b.score; });

    double id_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t k = i; k < j; ++k)
            if (all[k].is_id) id_rank_sum += midrank;
        i = j;
    }
    const double n_id = static_cast<double>(id_scores.size());
    const double n_ood = static_cast<double>(ood_scores.size());
    const double u = id_rank_sum - n_id * (n_id + 1.0) / 2.0;
    return u / (n_id * n_ood);
}

// Empirical step-function FPR at 95% TPR: τ is the largest threshold with
// TPR(τ) >= 0.95 (score >= τ classified ID); returns the OOD fraction >= τ.
inline double fpr_at_95_tpr(const std::vector<double>& id_scores,
                            const std::vector<double>& ood_scores) {
    if (id_scores.empty() || ood_scores.empty())
        throw validation_error("fpr_at_95_tpr: both score sets must be non-empty");
    std::vector<double> sorted = id_scores;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const std::size_t n = sorted.size();
    const std::size_t k = static_cast<std::size_t>(
        std::ceil(0.95 * static_cast<double>(n)) + 0.5);
    const double tau = sorted[std::min(k, n) - 1];
    std::size_t false_positives = 0;
    for (double s : ood_scores)
        if (s >= tau) ++false_positives;
    return static_cast<double>(false_positives) / static_cast<double>(ood_scores.size());
}

inline double msp_score(const double* probs_row, std::size_t c) {
    double best = probs_row[0];
    for (std::size_t k = 1; k < c; ++k) best = std::max(best, probs_row[k]);
    return best;
}

inline std::vector<double> msp_scores(const RealMatrix& probs) {
    std::vector<double> out(probs.rows);
    for (std::size_t i = 0; i < probs.rows; ++i) out[i] = msp_score(probs.row(i), probs.cols);
    return out;
}

struct CalibrationReport {
    double accuracy = 0.0;
    double ece = 0.0;
    double nll = 0.0;
    double brier = 0.0;
    std::optional<double> kl_to_soft;
    ReliabilityBins bins;
};

inline CalibrationReport evaluate_predictions(const RealMatrix& probs,
                                              const std::vector<std::uint32_t>& labels,
                                              const RealMatrix* soft_labels = nullptr,
                                              std::size_t bins = 15) {
    CalibrationReport r;
    r.accuracy = accuracy(probs, labels);
    auto [value, rb] = ece(probs, labels, bins);
    r.ece = value;
    r.bins = std::move(rb);
    r.nll = nll(probs, labels);
    r.brier = brier(probs, labels);
    if (soft_labels != nullptr) r.kl_to_soft = kl_to_soft(probs, *soft_labels);
    return r;
}

} // namespace wavehead
