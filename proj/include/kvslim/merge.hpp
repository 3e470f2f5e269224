#pragma once

#include "kvslim/attention.hpp"
#include "kvslim/numerics.hpp"

namespace kvslim {

/// Forward-pass sensitivity vectors for an adjacent pair (m, m+1) and
/// their Euclidean norms.
struct SensitivityTriple {
    Vector c11, c22, c12;  // d_v each
    double n11 = 0.0, n22 = 0.0, n12 = 0.0;
};

struct MergeWeights {
    double w_m = 0.5;
    double w_next = 0.5;
    bool fallback_used = false;
};

inline constexpr double kMergeEps = 1e-10;
inline constexpr double kFisherEps = 1e-12;

/// c11 = α_m(1-2α_m)(v_m - o), c22 likewise for m+1,
/// c12 = -α_m α_{m+1}(v_m + v_{m+1} - 2o).
SensitivityTriple sensitivity_vectors(const AttentionSnapshot& s, std::size_t m);

/// Gradient-free weights from the sensitivity norms:
/// w_m = (n11 - n12) / D, w_next = (n22 - n12) / D with D = n11 - 2 n12 + n22.
/// Falls back to (0.5, 0.5) when |D| <= eps or a weight leaves [-1, 2].
MergeWeights merge_weights_gradient_free(const SensitivityTriple& t, double eps = kMergeEps);

Vector merge_key_closed_form(const Vector& k_m, const Vector& k_next, const MergeWeights& w);

/// Pseudoinverse solution of the rank-one merge system: (1/γ) P_q b with
/// γ = g11 + 2 g12 + g22 and b = (g11+g12) k_m + (g12+g22) k_{m+1}.
Vector merge_key_exact(const AttentionSnapshot& s, const Vector& loss_grad, std::size_t m,
                       double eps = kMergeEps);

/// Same system expressed in the key span: w_m = (g11+g12)/γ, w_next = (g12+g22)/γ.
Vector merge_key_weight_form_exact(const AttentionSnapshot& s, const Vector& loss_grad,
                                   std::size_t m, double eps = kMergeEps);
MergeWeights exact_merge_weights(const AttentionSnapshot& s, const Vector& loss_grad,
                                 std::size_t m, double eps = kMergeEps);

/// Diagonal-Fisher baseline: per coordinate
/// k*_d = (g_m,d² k_m,d + g_next,d² k_next,d) / (g_m,d² + g_next,d² + eps).
Vector merge_key_asymkv(const Vector& k_m, const Vector& k_next, const Vector& grad_m,
                        const Vector& grad_next, double eps = kFisherEps);

/// Values merge by plain addition.
Vector merge_value(const Vector& v_m, const Vector& v_next);

Vector merge_key_mean(const Vector& k_m, const Vector& k_next);

}  // namespace kvslim
