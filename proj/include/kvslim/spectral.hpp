#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "kvslim/numerics.hpp"

namespace kvslim {

/// Eigen-structure of the induced metric M = W Wᵀ = U diag(λ) Uᵀ, λ_i = σ_i².
struct SpectralProfile {
    Vector lambda;    // descending, non-negative
    Matrix left_u;    // rows(W) x k, orthonormal columns
    std::size_t source_rows = 0;
    std::size_t source_cols = 0;
};

/// Per-mode additive shares of the projected cosine similarity.
struct ModeContributions {
    Vector contributions;
    double total = 0.0;
};

struct ConcentrationStats {
    double participation_ratio = 0.0;  // (Σλ)² / Σλ²
    double topk_energy = 0.0;          // Σ_{i<=k} λ_i / Σλ
};

SpectralProfile spectral_profile(const Matrix& w);

/// c_i = λ_i p_{t,i} p_{t+1,i} / (sqrt(Σλ p_t²) sqrt(Σλ p_{t+1}²)),
/// p_{t,i} = x_t · u_i. Σ c_i equals the projected cosine.
ModeContributions mode_contributions(const Vector& x_t, const Vector& x_next,
                                     const SpectralProfile& p);

/// cosine(x_t W, x_{t+1} W) for each adjacent pair of the sequence.
std::vector<double> adjacent_similarity(const std::vector<Vector>& xs, const Matrix& w);

ConcentrationStats concentration_stats(const SpectralProfile& p, std::size_t top_k = 8);

}  // namespace kvslim
