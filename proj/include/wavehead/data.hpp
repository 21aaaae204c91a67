#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wavehead/errors.hpp"
#include "wavehead/linalg.hpp"
#include "wavehead/rng.hpp"

namespace wavehead {

struct FeatureDataset {
    RealMatrix features;                    // n x dim
    std::vector<std::uint32_t> labels;      // n entries in [0, n_classes)
    std::optional<RealMatrix> soft_labels;  // n x C, row-stochastic
    std::size_t n_classes = 0;
    std::string provenance;

    std::size_t size() const { return features.rows; }
    std::size_t dim() const { return features.cols; }

    void validate() const {
        if (labels.size() != features.rows)
            throw dimension_error("FeatureDataset: label count mismatch");
        for (std::uint32_t y : labels)
            if (y >= n_classes) throw validation_error("FeatureDataset: label out of range");
        if (soft_labels) {
            if (soft_labels->rows != features.rows || soft_labels->cols != n_classes)
                throw dimension_error("FeatureDataset: soft label shape mismatch");
        }
    }
};

enum class OodMode { None, MeanShift, UniformNoise, GaussianNoise };

inline const char* to_string(OodMode m) {
    switch (m) {
        case OodMode::None: return "none";
        case OodMode::MeanShift: return "mean_shift";
        case OodMode::UniformNoise: return "uniform_noise";
        case OodMode::GaussianNoise: return "gaussian_noise";
    }
    return "?";
}

inline OodMode ood_mode_from_string(std::string_view tag) {
    for (OodMode m : {OodMode::None, OodMode::MeanShift, OodMode::UniformNoise,
                      OodMode::GaussianNoise})
        if (tag == to_string(m)) return m;
    throw validation_error("unknown ood mode: " + std::string(tag));
}

// Gaussian class mixture with an analytically known posterior. Defaults put
// the class means on a scaled simplex (mean_scale * e_k) with the scale
// chosen so the Bayes accuracy sits near 0.91.
struct SyntheticConfig {
    std::size_t classes = 10;
    std::size_t dim = 64;
    std::size_t n_samples = 20000;
    double sigma = 1.0;
    double mean_scale = 3.08;
    std::vector<std::vector<double>> means;  // empty = scaled simplex
    std::vector<double> priors;              // empty = uniform
    OodMode ood_mode = OodMode::None;
    double ood_shift = 0.0;    // added to every coordinate in MeanShift mode
    double noise_scale = 1.0;  // amplitude for the noise modes
    std::string name = "synthetic";

    std::vector<std::vector<double>> resolved_means() const {
        if (!means.empty()) return means;
        std::vector<std::vector<double>> out(classes, std::vector<double>(dim, 0.0));
        for (std::size_t k = 0; k < classes; ++k) out[k][k % dim] = mean_scale;
        return out;
    }

    std::vector<double> resolved_priors() const {
        if (!priors.empty()) return priors;
        return std::vector<double>(classes, 1.0 / static_cast<double>(classes));
    }

    void validate() const {
        if (classes < 1 || dim < 1) throw validation_error("SyntheticConfig: classes/dim >= 1");
        if (!(sigma > 0.0)) throw validation_error("SyntheticConfig: sigma must be positive");
        if (!means.empty()) {
            if (means.size() != classes)
                throw validation_error("SyntheticConfig: one mean vector per class required");
            for (const auto& m : means)
                if (m.size() != dim)
                    throw validation_error("SyntheticConfig: mean vector dimension mismatch");
        }
        if (!priors.empty()) {
            if (priors.size() != classes)
                throw validation_error("SyntheticConfig: one prior per class required");
            double sum = 0.0;
            for (double p : priors) {
                if (p < 0.0) throw validation_error("SyntheticConfig: negative prior");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw validation_error("SyntheticConfig: priors must sum to 1");
        }
    }
};

// Exact Bayes posterior q_k(x) ∝ π_k exp(-|x-μ_k|^2 / (2σ^2)), in log space.
inline void bayes_posterior(const std::vector<std::vector<double>>& means,
                            const std::vector<double>& priors, double sigma,
                            const double* x, std::size_t dim, double* out) {
    const std::size_t c = means.size();
    const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
    double peak = -1e308;
    for (std::size_t k = 0; k < c; ++k) {
        double dist_sq = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            const double diff = x[j] - means[k][j];
            dist_sq += diff * diff;
        }
        out[k] = std::log(std::max(priors[k], 1e-300)) - dist_sq * inv_two_sigma_sq;
        peak = std::max(peak, out[k]);
    }
    double denom = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
        out[k] = std::exp(out[k] - peak);
        denom += out[k];
    }
    const double inv = 1.0 / denom;
    for (std::size_t k = 0; k < c; ++k) out[k] *= inv;
}

inline FeatureDataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed) {
    config.validate();
    const auto means = config.resolved_means();
    const auto priors = config.resolved_priors();
    const std::size_t n = config.n_samples;
    const std::size_t dim = config.dim;
    const std::size_t c = config.classes;

    Rng rng(derive_stream(seed, "synthetic/" + config.name));

    FeatureDataset ds;
    ds.features = RealMatrix(n, dim);
    ds.labels.resize(n);
    ds.n_classes = c;
    ds.provenance = config.name + "#" + std::to_string(seed);

    const bool in_distribution = config.ood_mode == OodMode::None;
    if (in_distribution) ds.soft_labels = RealMatrix(n, c);

    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.next_double();
        std::size_t k = 0;
        double cum = 0.0;
        for (; k + 1 < c; ++k) {
            cum += priors[k];
            if (u < cum) break;
        }
        ds.labels[i] = static_cast<std::uint32_t>(k);

        double* row = ds.features.row(i);
        switch (config.ood_mode) {
            case OodMode::None:
                for (std::size_t j = 0; j < dim; ++j)
                    row[j] = means[k][j] + config.sigma * rng.gaussian();
                break;
            case OodMode::MeanShift:
                // A structureless far blob: one Gaussian centred off-manifold,
                // with no class geometry to classify.
                for (std::size_t j = 0; j < dim; ++j)
                    row[j] = config.ood_shift + config.sigma * rng.gaussian();
                break;
            case OodMode::UniformNoise:
                for (std::size_t j = 0; j < dim; ++j)
                    row[j] = rng.uniform(-config.noise_scale, config.noise_scale);
                break;
            case OodMode::GaussianNoise:
                for (std::size_t j = 0; j < dim; ++j)
                    row[j] = config.noise_scale * rng.gaussian();
                break;
        }
        if (in_distribution)
            bayes_posterior(means, priors, config.sigma, row, dim, ds.soft_labels->row(i));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// FCAL binary format, little-endian:
//   magic "FCAL" | u32 version=1 | u32 n | u32 dim | u32 C | u32 flags
//   features f32 row-major | labels u32 | soft labels f32 row-major (flag bit 0)
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::uint32_t kFcalVersion = 1;
inline constexpr std::uint32_t kFcalFlagSoftLabels = 1u;
inline constexpr std::size_t kFcalHeaderBytes = 24;

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8)
        out.push_back(static_cast<char>((v >> shift) & 0xff));
}

inline void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline float get_f32(const unsigned char* p) {
    const std::uint32_t bits = get_u32(p);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

} // namespace detail

inline void write_features(const FeatureDataset& ds, const std::string& path) {
    ds.validate();
    std::string buf;
    const std::size_t n = ds.size();
    const std::size_t dim = ds.dim();
    const std::size_t c = ds.n_classes;
    const bool soft = ds.soft_labels.has_value();
    buf.reserve(detail::kFcalHeaderBytes + n * dim * 4 + n * 4 + (soft ? n * c * 4 : 0));

    buf += "FCAL";
    detail::put_u32(buf, detail::kFcalVersion);
    detail::put_u32(buf, static_cast<std::uint32_t>(n));
    detail::put_u32(buf, static_cast<std::uint32_t>(dim));
    detail::put_u32(buf, static_cast<std::uint32_t>(c));
    detail::put_u32(buf, soft ? detail::kFcalFlagSoftLabels : 0u);

    for (double v : ds.features.data) detail::put_f32(buf, static_cast<float>(v));
    for (std::uint32_t y : ds.labels) detail::put_u32(buf, y);
    if (soft)
        for (double v : ds.soft_labels->data) detail::put_f32(buf, static_cast<float>(v));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error(io_error::kind::unreadable, "cannot open for write: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw io_error(io_error::kind::unreadable, "write failed: " + path);
}

inline FeatureDataset read_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error(io_error::kind::unreadable, "cannot open: " + path);
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* bytes = reinterpret_cast<const unsigned char*>(raw.data());
    const std::size_t total = raw.size();

    if (total < detail::kFcalHeaderBytes)
        throw io_error(io_error::kind::truncated, "FCAL: file shorter than header");
    if (std::memcmp(bytes, "FCAL", 4) != 0)
        throw io_error(io_error::kind::bad_magic, "FCAL: bad magic");
    const std::uint32_t version = detail::get_u32(bytes + 4);
    if (version != detail::kFcalVersion)
        throw io_error(io_error::kind::bad_version,
                       "FCAL: unsupported version " + std::to_string(version));
    const std::uint64_t n = detail::get_u32(bytes + 8);
    const std::uint64_t dim = detail::get_u32(bytes + 12);
    const std::uint64_t c = detail::get_u32(bytes + 16);
    const std::uint32_t flags = detail::get_u32(bytes + 20);

    if (flags & ~detail::kFcalFlagSoftLabels)
        throw io_error(io_error::kind::size_mismatch, "FCAL: unknown flag bits set");
    if (dim == 0 || c == 0)
        throw io_error(io_error::kind::payload, "FCAL: dim and C must be positive");
    const bool soft = (flags & detail::kFcalFlagSoftLabels) != 0;

    // 128-bit size arithmetic: header fields are attacker-controlled in the
    // fuzz sense and must not overflow or trigger huge allocations.
    const unsigned __int128 expected = static_cast<unsigned __int128>(detail::kFcalHeaderBytes) +
                                       static_cast<unsigned __int128>(n) * dim * 4 +
                                       static_cast<unsigned __int128>(n) * 4 +
                                       (soft ? static_cast<unsigned __int128>(n) * c * 4 : 0);
    if (static_cast<unsigned __int128>(total) < expected)
        throw io_error(io_error::kind::truncated, "FCAL: payload truncated (features/labels/soft section incomplete)");
    if (static_cast<unsigned __int128>(total) > expected)
        throw io_error(io_error::kind::size_mismatch, "FCAL: payload larger than header promises");

    FeatureDataset ds;
    ds.features = RealMatrix(static_cast<std::size_t>(n), static_cast<std::size_t>(dim));
    ds.labels.resize(static_cast<std::size_t>(n));
    ds.n_classes = static_cast<std::size_t>(c);
    ds.provenance = path;

    const unsigned char* p = bytes + detail::kFcalHeaderBytes;
    for (double& v : ds.features.data) {
        v = static_cast<double>(detail::get_f32(p));
        if (!std::isfinite(v))
            throw io_error(io_error::kind::payload, "FCAL: non-finite feature value");
        p += 4;
    }
    for (std::uint32_t& y : ds.labels) {
        y = detail::get_u32(p);
        if (y >= c) throw io_error(io_error::kind::payload, "FCAL: label out of range");
        p += 4;
    }
    if (soft) {
        ds.soft_labels = RealMatrix(static_cast<std::size_t>(n), static_cast<std::size_t>(c));
        for (double& v : ds.soft_labels->data) {
            v = static_cast<double>(detail::get_f32(p));
            if (!std::isfinite(v) || v < 0.0 || v > 1.0 + 1e-6)
                throw io_error(io_error::kind::payload, "FCAL: soft label out of [0,1]");
            p += 4;
        }
        for (std::size_t i = 0; i < ds.soft_labels->rows; ++i) {
            double sum = 0.0;
            for (std::size_t k = 0; k < ds.soft_labels->cols; ++k) sum += (*ds.soft_labels)(i, k);
            if (std::abs(sum - 1.0) > 1e-5)
                throw io_error(io_error::kind::payload, "FCAL: soft label row does not sum to 1");
        }
    }
    return ds;
}

// CSV with header "f0,...,f{dim-1},label[,q0,...,q{C-1}]".
inline FeatureDataset read_features_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error(io_error::kind::unreadable, "cannot open: " + path);

    auto split_line = [](const std::string& line) {
        std::vector<std::string> cells;
        std::string cell;
        std::stringstream ss(line);
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        return cells;
    };

    std::string line;
    if (!std::getline(in, line)) throw io_error(io_error::kind::schema, "CSV: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_line(line);

    std::size_t dim = 0;
    while (dim < header.size() && header[dim] == "f" + std::to_string(dim)) ++dim;
    if (dim == 0 || dim >= header.size() || header[dim] != "label")
        throw io_error(io_error::kind::schema, "CSV: header must be f0..f{dim-1},label[,q0..]");
    std::size_t soft_cols = 0;
    for (std::size_t j = dim + 1; j < header.size(); ++j) {
        if (header[j] != "q" + std::to_string(soft_cols))
            throw io_error(io_error::kind::schema, "CSV: unexpected column " + header[j]);
        ++soft_cols;
    }

    const std::size_t expected_cells = dim + 1 + soft_cols;
    std::vector<double> feature_values;
    std::vector<std::uint32_t> labels;
    std::vector<double> soft_values;

    auto parse_double = [&](const std::string& cell, std::size_t row) {
        double v = 0.0;
        const char* begin = cell.data();
        const char* end = begin + cell.size();
        auto [ptr, ec] = std::from_chars(begin, end, v);
        if (ec != std::errc{} || ptr != end || !std::isfinite(v))
            throw io_error(io_error::kind::schema,
                           "CSV: non-numeric cell '" + cell + "' in row " + std::to_string(row));
        return v;
    };

    std::size_t row_index = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row_index;
        const auto cells = split_line(line);
        if (cells.size() != expected_cells)
            throw io_error(io_error::kind::schema,
                           "CSV: ragged row " + std::to_string(row_index));
        for (std::size_t j = 0; j < dim; ++j)
            feature_values.push_back(parse_double(cells[j], row_index));
        const double label_value = parse_double(cells[dim], row_index);
        if (label_value < 0.0 || label_value != std::floor(label_value))
            throw io_error(io_error::kind::schema,
                           "CSV: label must be a non-negative integer in row " +
                               std::to_string(row_index));
        labels.push_back(static_cast<std::uint32_t>(label_value));
        for (std::size_t j = 0; j < soft_cols; ++j)
            soft_values.push_back(parse_double(cells[dim + 1 + j], row_index));
    }

    FeatureDataset ds;
    ds.features = RealMatrix(row_index, dim);
    ds.features.data = std::move(feature_values);
    ds.labels = std::move(labels);
    ds.provenance = path;
    if (soft_cols > 0) {
        ds.n_classes = soft_cols;
        ds.soft_labels = RealMatrix(row_index, soft_cols);
        ds.soft_labels->data = std::move(soft_values);
        for (std::uint32_t y : ds.labels)
            if (y >= ds.n_classes)
                throw io_error(io_error::kind::payload, "CSV: label out of range of soft block");
    } else {
        std::uint32_t top = 0;
        for (std::uint32_t y : ds.labels) top = std::max(top, y);
        ds.n_classes = ds.labels.empty() ? 1 : static_cast<std::size_t>(top) + 1;
    }
    return ds;
}

namespace detail {

// Largest-remainder apportionment of `total` into `fractions.size()` bins.
inline std::vector<std::size_t> largest_remainder(std::size_t total,
                                                  const std::vector<double>& fractions) {
    const std::size_t parts = fractions.size();
    std::vector<std::size_t> counts(parts, 0);
    std::vector<std::pair<double, std::size_t>> remainders(parts);
    std::size_t assigned = 0;
    for (std::size_t p = 0; p < parts; ++p) {
        const double exact = fractions[p] * static_cast<double>(total);
        counts[p] = static_cast<std::size_t>(std::floor(exact));
        remainders[p] = {exact - std::floor(exact), p};
        assigned += counts[p];
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t r = 0; assigned < total; ++r, ++assigned)
        counts[remainders[r].second] += 1;
    return counts;
}

} // namespace detail

// Deterministic stratified split. Per class, indices are shuffled once and
// partitioned by largest-remainder rounding (every class within +-1 of its
// proportional share per part); a repair pass then moves single samples so
// the overall part sizes match the largest-remainder apportionment of n.
inline std::vector<FeatureDataset> split(const FeatureDataset& ds,
                                         const std::vector<double>& fractions,
                                         std::uint64_t seed) {
    if (fractions.empty()) throw validation_error("split: no fractions given");
    double sum = 0.0;
    for (double f : fractions) {
        if (f < 0.0) throw validation_error("split: negative fraction");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw validation_error("split: fractions must sum to 1");

    const std::size_t parts = fractions.size();
    std::vector<std::vector<std::size_t>> by_class(ds.n_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);

    Rng rng(derive_stream(seed, "split/" + ds.provenance));
    const std::vector<std::size_t> targets = detail::largest_remainder(ds.size(), fractions);

    // counts[class][part], each within +-1 of the proportional share.
    std::vector<std::vector<std::size_t>> counts(by_class.size());
    std::vector<std::size_t> totals(parts, 0);
    for (std::size_t k = 0; k < by_class.size(); ++k) {
        rng.shuffle(by_class[k]);
        counts[k] = detail::largest_remainder(by_class[k].size(), fractions);
        for (std::size_t p = 0; p < parts; ++p) totals[p] += counts[k][p];
    }

    // Repair: move one sample at a time from an over-full part to the most
    // under-full part with headroom in the same class. Moves only ever go
    // from a count above its floor to a count below its ceiling, so the
    // per-class +-1 guarantee survives.
    for (std::size_t guard = 0; guard < 4 * ds.size() + 16; ++guard) {
        std::size_t over = parts;
        for (std::size_t p = 0; p < parts; ++p)
            if (totals[p] > targets[p]) {
                over = p;
                break;
            }
        if (over == parts) break;
        bool moved = false;
        for (std::size_t k = 0; k < by_class.size() && !moved; ++k) {
            const double exact_over = fractions[over] * static_cast<double>(by_class[k].size());
            if (counts[k][over] == 0 ||
                static_cast<double>(counts[k][over]) <= std::floor(exact_over))
                continue;
            std::size_t best = parts;
            long best_deficit = 0;
            for (std::size_t q = 0; q < parts; ++q) {
                if (q == over) continue;
                const double exact_q = fractions[q] * static_cast<double>(by_class[k].size());
                if (static_cast<double>(counts[k][q]) >= std::ceil(exact_q)) continue;
                const long deficit = static_cast<long>(totals[q]) - static_cast<long>(targets[q]);
                if (best == parts || deficit < best_deficit) {
                    best = q;
                    best_deficit = deficit;
                }
            }
            if (best == parts) continue;
            counts[k][over] -= 1;
            counts[k][best] += 1;
            totals[over] -= 1;
            totals[best] += 1;
            moved = true;
        }
        if (!moved) break;
    }

    std::vector<std::vector<std::size_t>> part_rows(parts);
    for (std::size_t k = 0; k < by_class.size(); ++k) {
        std::size_t cursor = 0;
        for (std::size_t p = 0; p < parts; ++p)
            for (std::size_t c = 0; c < counts[k][p]; ++c)
                part_rows[p].push_back(by_class[k][cursor++]);
    }

    std::vector<FeatureDataset> out(parts);
    for (std::size_t p = 0; p < parts; ++p) {
        auto& rows = part_rows[p];
        std::sort(rows.begin(), rows.end());
        FeatureDataset& part = out[p];
        part.features = RealMatrix(rows.size(), ds.dim());
        part.labels.resize(rows.size());
        part.n_classes = ds.n_classes;
        part.provenance = ds.provenance + "/part" + std::to_string(p);
        if (ds.soft_labels) part.soft_labels = RealMatrix(rows.size(), ds.n_classes);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const std::size_t src = rows[r];
            std::copy(ds.features.row(src), ds.features.row(src) + ds.dim(),
                      part.features.row(r));
            part.labels[r] = ds.labels[src];
            if (ds.soft_labels)
                std::copy(ds.soft_labels->row(src), ds.soft_labels->row(src) + ds.n_classes,
                          part.soft_labels->row(r));
        }
    }
    return out;
}

// FNV-1a over the in-memory feature bytes; used by the harness to assert the
// shared-backbone discipline (all variants see identical features).
inline std::string feature_checksum(const FeatureDataset& ds) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    const auto* bytes = reinterpret_cast<const unsigned char*>(ds.features.data.data());
    const std::size_t count = ds.features.data.size() * sizeof(double);
    for (std::size_t i = 0; i < count; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

} // namespace wavehead
