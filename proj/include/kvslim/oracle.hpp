#pragma once

#include "kvslim/attention.hpp"
#include "kvslim/numerics.hpp"

namespace kvslim {

struct FdConfig {
    double step = 1e-5;  // use ~1e-4 for second differences
};

/// Cosines of the loss direction against the three sensitivity vectors,
/// and their worst pairwise deviation.
struct AlignmentReport {
    double cos_e_c11 = 0.0;
    double cos_e_c22 = 0.0;
    double cos_e_c12 = 0.0;
    double max_deviation = 0.0;
};

/// Central finite differences of L(K) = E·o(K) in the coordinates of k_i.
Vector fd_key_gradient(const Vector& q, const std::vector<Vector>& keys,
                       const std::vector<Vector>& values, const Vector& loss_grad,
                       std::size_t i, const FdConfig& cfg = {});

/// Central differences of fd_key_gradient in the coordinates of k_j.
/// `grad_cfg` controls the inner gradient step. The outer division by
/// 2·cfg.step amplifies the inner evaluation's rounding noise, so the
/// inner step defaults to the Hessian scale rather than the gradient one.
Matrix fd_hessian_block(const Vector& q, const std::vector<Vector>& keys,
                        const std::vector<Vector>& values, const Vector& loss_grad,
                        std::size_t i, std::size_t j, const FdConfig& cfg = {1e-4},
                        const FdConfig& grad_cfg = {1e-4});

/// Dense route for the merge system: materializes M = h11 + 2 h12 + h22 and
/// N = h11 k_m + h12 (k_m + k_{m+1}) + h22 k_{m+1}, returns M⁺ N via an
/// SVD pseudoinverse with cutoff 1e-10 σ_max.
Vector dense_merge_oracle(const AttentionSnapshot& s, const Vector& loss_grad, std::size_t m);

AlignmentReport alignment_report(const AttentionSnapshot& s, const Vector& loss_grad,
                                 std::size_t m);

/// Value of the curvature model ½ kᵀM k − kᵀN at a merged-key candidate.
/// Stationary in span{q} exactly at the pseudoinverse solution.
double quadratic_objective_value(const AttentionSnapshot& s, const Vector& loss_grad,
                                 std::size_t m, const Vector& k_candidate);

/// Directional derivative of the curvature model along `dir` (normalized):
/// d̂ᵀ(M k − N). Zero at a stationary point along that direction.
double quadratic_model_slope(const AttentionSnapshot& s, const Vector& loss_grad,
                             std::size_t m, const Vector& k_candidate, const Vector& dir);

}  // namespace kvslim
