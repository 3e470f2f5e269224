#include "kvslim/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kvslim {

namespace {

void require_same_size(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw DimensionMismatch("vector sizes differ: " + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()));
    }
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

double dot(const Vector& a, const Vector& b) {
    require_same_size(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const Vector& a) { return std::sqrt(dot(a, a)); }

Vector add(const Vector& a, const Vector& b) {
    require_same_size(a, b);
    Vector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

Vector sub(const Vector& a, const Vector& b) {
    require_same_size(a, b);
    Vector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

Vector scale(const Vector& a, double s) {
    Vector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * s;
    return r;
}

void axpy(double s, const Vector& x, Vector& y) {
    require_same_size(x, y);
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols, m.rows);
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) t(c, r) = m(r, c);
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw DimensionMismatch("matmul: inner dimensions differ");
    Matrix r(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) r(i, j) += aik * b(k, j);
        }
    }
    return r;
}

Vector matvec(const Matrix& m, const Vector& x) {
    if (m.cols != x.size()) throw DimensionMismatch("matvec: dimensions differ");
    Vector r(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) s += m(i, j) * x[j];
        r[i] = s;
    }
    return r;
}

Vector vecmat(const Vector& x, const Matrix& m) {
    if (m.rows != x.size()) throw DimensionMismatch("vecmat: dimensions differ");
    Vector r(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        for (std::size_t j = 0; j < m.cols; ++j) r[j] += xi * m(i, j);
    }
    return r;
}

Matrix outer(const Vector& a, const Vector& b) {
    Matrix r(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) r(i, j) = a[i] * b[j];
    return r;
}

double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data) s += v * v;
    return std::sqrt(s);
}

Vector softmax(const Vector& logits) {
    if (logits.empty()) throw EmptySequence("softmax: empty logits");
    const double mx = *std::max_element(logits.begin(), logits.end());
    Vector out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

namespace {

// One-sided Jacobi on a tall (rows >= cols) matrix: orthogonalizes the
// columns of a working copy, accumulating rotations into V.
SvdResult svd_tall(const Matrix& m, int max_sweeps) {
    const std::size_t rows = m.rows, cols = m.cols;
    Matrix a = m;
    Matrix v = Matrix::identity(cols);

    const double tol = 1e-14;
    bool converged = false;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        converged = true;
        for (std::size_t p = 0; p + 1 < cols; ++p) {
            for (std::size_t q = p + 1; q < cols; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t r = 0; r < rows; ++r) {
                    app += a(r, p) * a(r, p);
                    aqq += a(r, q) * a(r, q);
                    apq += a(r, p) * a(r, q);
                }
                if (std::abs(apq) <= tol * std::sqrt(app * aqq)) continue;
                converged = false;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t r = 0; r < rows; ++r) {
                    const double ap = a(r, p), aq = a(r, q);
                    a(r, p) = c * ap - s * aq;
                    a(r, q) = s * ap + c * aq;
                }
                for (std::size_t r = 0; r < cols; ++r) {
                    const double vp = v(r, p), vq = v(r, q);
                    v(r, p) = c * vp - s * vq;
                    v(r, q) = s * vp + c * vq;
                }
            }
        }
    }
    if (!converged) throw ConvergenceFailure("svd: Jacobi sweeps did not converge");

    std::vector<double> sig(cols);
    for (std::size_t j = 0; j < cols; ++j) {
        double s = 0.0;
        for (std::size_t r = 0; r < rows; ++r) s += a(r, j) * a(r, j);
        sig[j] = std::sqrt(s);
    }
    std::vector<std::size_t> order(cols);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return sig[i] > sig[j]; });

    SvdResult res;
    res.u = Matrix(rows, cols);
    res.sigma.resize(cols);
    res.vt = Matrix(cols, cols);
    const double sig_max = sig[order[0]];
    for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t src = order[j];
        res.sigma[j] = sig[src];
        for (std::size_t r = 0; r < cols; ++r) res.vt(j, r) = v(r, src);
        if (sig[src] > sig_max * 1e-300 && sig[src] > 0.0) {
            for (std::size_t r = 0; r < rows; ++r) res.u(r, j) = a(r, src) / sig[src];
        }
    }
    // Complete U for null columns (zero singular values) by Gram-Schmidt
    // against the already-placed columns.
    for (std::size_t j = 0; j < cols; ++j) {
        if (res.sigma[j] > 0.0) continue;
        for (std::size_t basis = 0; basis < rows; ++basis) {
            Vector cand(rows, 0.0);
            cand[basis] = 1.0;
            for (std::size_t k = 0; k < cols; ++k) {
                if (k == j) continue;
                double proj = 0.0;
                for (std::size_t r = 0; r < rows; ++r) proj += res.u(r, k) * cand[r];
                for (std::size_t r = 0; r < rows; ++r) cand[r] -= proj * res.u(r, k);
            }
            const double n = norm2(cand);
            if (n > 0.5) {
                for (std::size_t r = 0; r < rows; ++r) res.u(r, j) = cand[r] / n;
                break;
            }
        }
    }
    return res;
}

}  // namespace

SvdResult svd(const Matrix& m, int max_sweeps) {
    if (m.rows == 0 || m.cols == 0) throw DimensionMismatch("svd: empty matrix");
    for (double v : m.data) {
        if (!std::isfinite(v)) throw Error("svd: non-finite input");
    }
    if (m.rows >= m.cols) return svd_tall(m, max_sweeps);
    // A = (Aᵀ)ᵀ = (U' Σ V'ᵀ)ᵀ  →  U = V', Vᵀ = U'ᵀ
    SvdResult t = svd_tall(transpose(m), max_sweeps);
    SvdResult res;
    res.u = transpose(t.vt);
    res.sigma = t.sigma;
    res.vt = transpose(t.u);
    return res;
}

Vector project_onto(const Vector& q, const Vector& b, double eps_q) {
    require_same_size(q, b);
    const double qq = dot(q, q);
    if (std::sqrt(qq) <= eps_q) throw DegenerateDirection("project_onto: near-zero direction");
    return scale(q, dot(q, b) / qq);
}

double cosine(const Vector& a, const Vector& b, double eps) {
    const double na = norm2(a), nb = norm2(b);
    if (na <= eps || nb <= eps) throw DegenerateDirection("cosine: zero-norm input");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

}  // namespace kvslim
