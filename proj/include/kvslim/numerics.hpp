#pragma once

#include <cstddef>
#include <vector>

#include "kvslim/errors.hpp"

namespace kvslim {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // rows * cols, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    static Matrix identity(std::size_t n);
};

// --- elementary vector ops ---------------------------------------------

double dot(const Vector& a, const Vector& b);
double norm2(const Vector& a);
Vector add(const Vector& a, const Vector& b);
Vector sub(const Vector& a, const Vector& b);
Vector scale(const Vector& a, double s);
// y += s * x
void axpy(double s, const Vector& x, Vector& y);

Matrix transpose(const Matrix& m);
Matrix matmul(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& m, const Vector& x);
// xᵀ M for a row vector x (length m.rows); returns length m.cols.
Vector vecmat(const Vector& x, const Matrix& m);
Matrix outer(const Vector& a, const Vector& b);
double frobenius_norm(const Matrix& m);

// --- core operations ----------------------------------------------------

/// Numerically stable softmax (max subtraction).
Vector softmax(const Vector& logits);

struct SvdResult {
    Matrix u;       // rows x k, orthonormal columns
    Vector sigma;   // k, non-negative, descending
    Matrix vt;      // k x cols, orthonormal rows
};

/// Thin SVD via one-sided Jacobi; k = min(rows, cols).
/// Throws ConvergenceFailure if the sweep cap is exceeded.
SvdResult svd(const Matrix& m, int max_sweeps = 128);

inline constexpr double kDegenerateEps = 1e-12;

/// Orthogonal projection of b onto span{q}.
Vector project_onto(const Vector& q, const Vector& b, double eps_q = kDegenerateEps);

/// Cosine similarity, clamped to [-1, 1].
double cosine(const Vector& a, const Vector& b, double eps = kDegenerateEps);

}  // namespace kvslim
