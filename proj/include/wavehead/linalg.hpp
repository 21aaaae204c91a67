#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "wavehead/errors.hpp"

namespace wavehead {

// Complex state in C^d stored as split real/imaginary arrays. The unitary
// evolution here is a real orthogonal matrix applied to both parts, so the
// split layout keeps every kernel real-valued.
struct ComplexVector {
    std::vector<double> re;
    std::vector<double> im;

    ComplexVector() = default;
    explicit ComplexVector(std::size_t dim) : re(dim, 0.0), im(dim, 0.0) {}
    ComplexVector(std::vector<double> real_part, std::vector<double> imag_part)
        : re(std::move(real_part)), im(std::move(imag_part)) {
        if (re.size() != im.size())
            throw dimension_error("ComplexVector: re/im length mismatch");
    }

    std::size_t dim() const { return re.size(); }

    double squared_norm() const {
        double acc = 0.0;
        for (std::size_t i = 0; i < re.size(); ++i) acc += re[i] * re[i] + im[i] * im[i];
        return acc;
    }

    double norm() const { return std::sqrt(squared_norm()); }
};

// Dense row-major real matrix.
struct RealMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    RealMatrix() = default;
    RealMatrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }

    bool square() const { return rows == cols; }

    static RealMatrix identity(std::size_t n) {
        RealMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

// C measurement vectors in C^d, one per class.
struct MeasurementSet {
    std::vector<ComplexVector> vectors;

    std::size_t count() const { return vectors.size(); }
    std::size_t dim() const { return vectors.empty() ? 0 : vectors.front().dim(); }

    void validate() const {
        if (vectors.size() < 2)
            throw validation_error("MeasurementSet: needs at least 2 vectors");
        for (const auto& v : vectors)
            if (v.dim() != dim())
                throw dimension_error("MeasurementSet: mixed dimensions");
    }
};

inline double max_abs(const RealMatrix& m) {
    double best = 0.0;
    for (double v : m.data) best = std::max(best, std::abs(v));
    return best;
}

inline double frobenius_norm(const RealMatrix& m) {
    double acc = 0.0;
    for (double v : m.data) acc += v * v;
    return std::sqrt(acc);
}

inline RealMatrix transpose(const RealMatrix& m) {
    RealMatrix t(m.cols, m.rows);
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) t(c, r) = m(r, c);
    return t;
}

// C = A * B, cache-friendly ikj order.
inline RealMatrix matmul(const RealMatrix& a, const RealMatrix& b) {
    if (a.cols != b.rows) throw dimension_error("matmul: inner dimensions differ");
    RealMatrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

// C = A * B^T.
inline RealMatrix matmul_transposed(const RealMatrix& a, const RealMatrix& bt) {
    if (a.cols != bt.cols) throw dimension_error("matmul_transposed: inner dimensions differ");
    RealMatrix c(a.rows, bt.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        for (std::size_t j = 0; j < bt.rows; ++j) {
            const double* brow = bt.row(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            c(i, j) = acc;
        }
    }
    return c;
}

inline std::vector<double> mat_vec(const RealMatrix& m, const std::vector<double>& v) {
    if (m.cols != v.size()) throw dimension_error("mat_vec: dimension mismatch");
    std::vector<double> out(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * v[c];
        out[r] = acc;
    }
    return out;
}

// S = A - A^T. Each off-diagonal pair is computed once and mirrored with a
// sign flip, so S == -S^T holds bit-identically.
inline RealMatrix skew_symmetrize(const RealMatrix& a) {
    if (!a.square()) throw dimension_error("skew_symmetrize: matrix is not square");
    const std::size_t n = a.rows;
    RealMatrix s(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = a(i, j) - a(j, i);
            s(i, j) = v;
            s(j, i) = -v;
        }
    }
    return s;
}

// LU factorisation with partial pivoting, kept for reuse across solves.
struct LuFactors {
    RealMatrix lu;               // L below diagonal (unit), U on and above
    std::vector<std::size_t> perm;
};

inline LuFactors lu_factor(const RealMatrix& m) {
    if (!m.square()) throw dimension_error("lu_factor: matrix is not square");
    const std::size_t n = m.rows;
    const double pivot_floor = 1e-14 * std::max(1.0, max_abs(m));

    LuFactors f{m, std::vector<std::size_t>(n)};
    for (std::size_t i = 0; i < n; ++i) f.perm[i] = i;

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t pivot = k;
        double best = std::abs(f.lu(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            const double cand = std::abs(f.lu(i, k));
            if (cand > best) {
                best = cand;
                pivot = i;
            }
        }
        if (best < pivot_floor)
            throw singularity_error("lu_factor: pivot " + std::to_string(k) +
                                    " below working precision");
        if (pivot != k) {
            std::swap(f.perm[k], f.perm[pivot]);
            for (std::size_t j = 0; j < n; ++j) std::swap(f.lu(k, j), f.lu(pivot, j));
        }
        const double inv_pivot = 1.0 / f.lu(k, k);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double mult = f.lu(i, k) * inv_pivot;
            f.lu(i, k) = mult;
            if (mult == 0.0) continue;
            for (std::size_t j = k + 1; j < n; ++j) f.lu(i, j) -= mult * f.lu(k, j);
        }
    }
    return f;
}

// Solves M X = B for all columns of B using precomputed factors.
inline RealMatrix lu_solve_factored(const LuFactors& f, const RealMatrix& b) {
    const std::size_t n = f.lu.rows;
    if (b.rows != n) throw dimension_error("lu_solve: row count mismatch");
    RealMatrix x(n, b.cols);

    // Forward substitution on the permuted rows (unit L).
    for (std::size_t i = 0; i < n; ++i) {
        const double* brow = b.row(f.perm[i]);
        double* xrow = x.row(i);
        for (std::size_t c = 0; c < b.cols; ++c) xrow[c] = brow[c];
        for (std::size_t j = 0; j < i; ++j) {
            const double l = f.lu(i, j);
            if (l == 0.0) continue;
            const double* xj = x.row(j);
            for (std::size_t c = 0; c < b.cols; ++c) xrow[c] -= l * xj[c];
        }
    }
    // Back substitution (U).
    for (std::size_t ii = n; ii > 0; --ii) {
        const std::size_t i = ii - 1;
        double* xrow = x.row(i);
        for (std::size_t j = i + 1; j < n; ++j) {
            const double u = f.lu(i, j);
            if (u == 0.0) continue;
            const double* xj = x.row(j);
            for (std::size_t c = 0; c < b.cols; ++c) xrow[c] -= u * xj[c];
        }
        const double inv_diag = 1.0 / f.lu(i, i);
        for (std::size_t c = 0; c < b.cols; ++c) xrow[c] *= inv_diag;
    }
    return x;
}

inline RealMatrix lu_solve(const RealMatrix& m, const RealMatrix& b) {
    return lu_solve_factored(lu_factor(m), b);
}

// Cayley transform U = (I - S)(I + S)^-1 of a skew-symmetric S. For real skew
// S the factors commute and I + S is always nonsingular (eigenvalues 1 + iλ),
// so the only error path is a violated skewness precondition.
inline RealMatrix cayley(const RealMatrix& s) {
    if (!s.square()) throw dimension_error("cayley: matrix is not square");
    const std::size_t n = s.rows;
    double skew_defect = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            skew_defect = std::max(skew_defect, std::abs(s(i, j) + s(j, i)));
    if (skew_defect > 1e-12)
        throw validation_error("cayley: input is not skew-symmetric");

    RealMatrix plus = RealMatrix::identity(n);
    RealMatrix minus = RealMatrix::identity(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            plus(i, j) += s(i, j);
            minus(i, j) -= s(i, j);
        }
    // U^T = (I - S)^-1 (I + S), using (I + S)^T = I - S.
    return transpose(lu_solve(minus, plus));
}

// ψ' = U ψ, applied to the real and imaginary parts separately.
inline ComplexVector apply_orthogonal(const RealMatrix& u, const ComplexVector& psi) {
    if (!u.square() || u.cols != psi.dim())
        throw dimension_error("apply_orthogonal: dimension mismatch");
    return ComplexVector(mat_vec(u, psi.re), mat_vec(u, psi.im));
}

// ⟨m|ψ⟩ = Σ conj(m_i) ψ_i, conjugate-linear in the first argument.
inline std::complex<double> hermitian_inner(const ComplexVector& m, const ComplexVector& psi) {
    if (m.dim() != psi.dim()) throw dimension_error("hermitian_inner: dimension mismatch");
    double re = 0.0;
    double im = 0.0;
    for (std::size_t i = 0; i < m.dim(); ++i) {
        re += m.re[i] * psi.re[i] + m.im[i] * psi.im[i];
        im += m.re[i] * psi.im[i] - m.im[i] * psi.re[i];
    }
    return {re, im};
}

inline std::vector<double> magnitude(const ComplexVector& psi) {
    std::vector<double> out(psi.dim());
    for (std::size_t i = 0; i < psi.dim(); ++i)
        out[i] = std::sqrt(psi.re[i] * psi.re[i] + psi.im[i] * psi.im[i]);
    return out;
}

inline ComplexVector normalize(const ComplexVector& psi0) {
    const double norm = psi0.norm();
    if (!(norm > 1e-12))
        throw degenerate_state_error("normalize: state norm " + std::to_string(norm) +
                                     " below 1e-12");
    ComplexVector out = psi0;
    const double inv = 1.0 / norm;
    for (std::size_t i = 0; i < out.dim(); ++i) {
        out.re[i] *= inv;
        out.im[i] *= inv;
    }
    return out;
}

} // namespace wavehead
