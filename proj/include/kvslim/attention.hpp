#pragma once

#include <cstddef>
#include <vector>

#include "kvslim/numerics.hpp"

namespace kvslim {

/// One head's forward state: query, keys, values, logits, scores, output.
struct AttentionSnapshot {
    Vector query;                // d_k
    std::vector<Vector> keys;    // n x d_k
    std::vector<Vector> values;  // n x d_v
    Vector logits;               // n
    Vector scores;               // n, softmax(logits)
    Vector output;               // d_v
    double scale = 0.0;          // 1/sqrt(d_k)

    std::size_t n() const { return keys.size(); }
    std::size_t d_k() const { return query.size(); }
    std::size_t d_v() const { return output.size(); }
};

/// Rank-one Hessian block: coefficient * q qᵀ. The coefficient already
/// carries the 1/d_k factor.
struct HessianBlock {
    double coefficient = 0.0;
    Vector direction;  // q

    Matrix materialize() const;
};

AttentionSnapshot attention_forward(const Vector& q, const std::vector<Vector>& keys,
                                    const std::vector<Vector>& values);

/// Gradient of L = E·o with respect to key i: (1/sqrt(d_k)) α_i [Eᵀ(v_i - o)] q.
Vector key_gradient(const AttentionSnapshot& s, const Vector& loss_grad, std::size_t i);

/// Exact second-derivative block between keys i and j.
HessianBlock hessian_block(const AttentionSnapshot& s, const Vector& loss_grad,
                           std::size_t i, std::size_t j);

}  // namespace kvslim
