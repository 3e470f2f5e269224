#include "kvslim/merge.hpp"

#include <cmath>

namespace kvslim {

SensitivityTriple sensitivity_vectors(const AttentionSnapshot& s, std::size_t m) {
    if (m + 1 >= s.n()) throw IndexOutOfRange("sensitivity_vectors: pair index");
    const double am = s.scores[m];
    const double an = s.scores[m + 1];
    SensitivityTriple t;
    t.c11 = scale(sub(s.values[m], s.output), am * (1.0 - 2.0 * am));
    t.c22 = scale(sub(s.values[m + 1], s.output), an * (1.0 - 2.0 * an));
    Vector sum = add(s.values[m], s.values[m + 1]);
    axpy(-2.0, s.output, sum);
    t.c12 = scale(sum, -am * an);
    t.n11 = norm2(t.c11);
    t.n22 = norm2(t.c22);
    t.n12 = norm2(t.c12);
    return t;
}

MergeWeights merge_weights_gradient_free(const SensitivityTriple& t, double eps) {
    // grouped so swapping the pair swaps the weights bitwise
    const double denom = (t.n11 + t.n22) - 2.0 * t.n12;
    if (std::abs(denom) <= eps) return MergeWeights{0.5, 0.5, true};
    const double w_m = (t.n11 - t.n12) / denom;
    const double w_next = (t.n22 - t.n12) / denom;
    if (w_m < -1.0 || w_m > 2.0 || w_next < -1.0 || w_next > 2.0)
        return MergeWeights{0.5, 0.5, true};
    return MergeWeights{w_m, w_next, false};
}

Vector merge_key_closed_form(const Vector& k_m, const Vector& k_next, const MergeWeights& w) {
    if (k_m.size() != k_next.size()) throw DimensionMismatch("merge_key_closed_form: keys");
    Vector out = scale(k_m, w.w_m);
    axpy(w.w_next, k_next, out);
    return out;
}

namespace {

struct ScalarSensitivities {
    double g11, g12, g22, gamma;
};

ScalarSensitivities scalar_sensitivities(const AttentionSnapshot& s, const Vector& loss_grad,
                                         std::size_t m) {
    const SensitivityTriple t = sensitivity_vectors(s, m);
    ScalarSensitivities g{};
    g.g11 = dot(loss_grad, t.c11);
    g.g22 = dot(loss_grad, t.c22);
    g.g12 = dot(loss_grad, t.c12);
    g.gamma = g.g11 + 2.0 * g.g12 + g.g22;
    return g;
}

}  // namespace

Vector merge_key_exact(const AttentionSnapshot& s, const Vector& loss_grad, std::size_t m,
                       double eps) {
    const ScalarSensitivities g = scalar_sensitivities(s, loss_grad, m);
    if (std::abs(g.gamma) <= eps) throw DegenerateSystem("merge_key_exact: |gamma| <= eps");
    Vector b = scale(s.keys[m], g.g11 + g.g12);
    axpy(g.g12 + g.g22, s.keys[m + 1], b);
    return scale(project_onto(s.query, b), 1.0 / g.gamma);
}

MergeWeights exact_merge_weights(const AttentionSnapshot& s, const Vector& loss_grad,
                                 std::size_t m, double eps) {
    const ScalarSensitivities g = scalar_sensitivities(s, loss_grad, m);
    if (std::abs(g.gamma) <= eps)
        throw DegenerateSystem("exact_merge_weights: |gamma| <= eps");
    return MergeWeights{(g.g11 + g.g12) / g.gamma, (g.g12 + g.g22) / g.gamma, false};
}

Vector merge_key_weight_form_exact(const AttentionSnapshot& s, const Vector& loss_grad,
                                   std::size_t m, double eps) {
    const MergeWeights w = exact_merge_weights(s, loss_grad, m, eps);
    return merge_key_closed_form(s.keys[m], s.keys[m + 1], w);
}

Vector merge_key_asymkv(const Vector& k_m, const Vector& k_next, const Vector& grad_m,
                        const Vector& grad_next, double eps) {
    if (k_m.size() != k_next.size() || k_m.size() != grad_m.size() ||
        k_m.size() != grad_next.size())
        throw DimensionMismatch("merge_key_asymkv: dimensions");
    Vector out(k_m.size());
    for (std::size_t d = 0; d < k_m.size(); ++d) {
        const double fm = grad_m[d] * grad_m[d];
        const double fn = grad_next[d] * grad_next[d];
        out[d] = (fm * k_m[d] + fn * k_next[d]) / (fm + fn + eps);
    }
    return out;
}

Vector merge_value(const Vector& v_m, const Vector& v_next) {
    if (v_m.size() != v_next.size()) throw DimensionMismatch("merge_value: dimensions");
    return add(v_m, v_next);
}

Vector merge_key_mean(const Vector& k_m, const Vector& k_next) {
    if (k_m.size() != k_next.size()) throw DimensionMismatch("merge_key_mean: dimensions");
    return scale(add(k_m, k_next), 0.5);
}

}  // namespace kvslim
