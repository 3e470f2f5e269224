#include "kvslim/attention.hpp"

#include <cmath>

namespace kvslim {

Matrix HessianBlock::materialize() const {
    Matrix m = outer(direction, direction);
    for (double& v : m.data) v *= coefficient;
    return m;
}

AttentionSnapshot attention_forward(const Vector& q, const std::vector<Vector>& keys,
                                    const std::vector<Vector>& values) {
    if (keys.empty() || values.empty()) throw EmptySequence("attention_forward: empty sequence");
    if (keys.size() != values.size())
        throw DimensionMismatch("attention_forward: |K| != |V|");
    const std::size_t dk = q.size();
    const std::size_t dv = values.front().size();
    for (const auto& k : keys)
        if (k.size() != dk) throw DimensionMismatch("attention_forward: key dimension");
    for (const auto& v : values)
        if (v.size() != dv) throw DimensionMismatch("attention_forward: value dimension");

    AttentionSnapshot s;
    s.query = q;
    s.keys = keys;
    s.values = values;
    s.scale = 1.0 / std::sqrt(static_cast<double>(dk));
    s.logits.resize(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) s.logits[i] = dot(q, keys[i]) * s.scale;
    s.scores = softmax(s.logits);
    s.output.assign(dv, 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) axpy(s.scores[i], values[i], s.output);
    return s;
}

Vector key_gradient(const AttentionSnapshot& s, const Vector& loss_grad, std::size_t i) {
    if (i >= s.n()) throw IndexOutOfRange("key_gradient: index");
    const double residual = dot(loss_grad, sub(s.values[i], s.output));
    return scale(s.query, s.scale * s.scores[i] * residual);
}

HessianBlock hessian_block(const AttentionSnapshot& s, const Vector& loss_grad,
                           std::size_t i, std::size_t j) {
    if (i >= s.n() || j >= s.n()) throw IndexOutOfRange("hessian_block: index");
    const double inv_dk = s.scale * s.scale;
    double coeff = 0.0;
    if (i == j) {
        const double ai = s.scores[i];
        coeff = inv_dk * ai * (1.0 - 2.0 * ai) * dot(loss_grad, sub(s.values[i], s.output));
    } else {
        Vector sum = add(s.values[i], s.values[j]);
        axpy(-2.0, s.output, sum);
        // the score product is grouped so (i, j) and (j, i) agree bitwise
        coeff = -inv_dk * (s.scores[i] * s.scores[j]) * dot(loss_grad, sum);
    }
    return HessianBlock{coeff, s.query};
}

}  // namespace kvslim
