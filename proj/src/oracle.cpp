#include "kvslim/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "kvslim/merge.hpp"

namespace kvslim {

namespace {

double surrogate_loss(const Vector& q, const std::vector<Vector>& keys,
                      const std::vector<Vector>& values, const Vector& loss_grad) {
    return dot(loss_grad, attention_forward(q, keys, values).output);
}

struct DenseSystem {
    Matrix m;  // h11 + 2 h12 + h22
    Vector n;  // h11 k_m + h12 (k_m + k_{m+1}) + h22 k_{m+1}
};

DenseSystem dense_system(const AttentionSnapshot& s, const Vector& loss_grad, std::size_t m) {
    if (m + 1 >= s.n()) throw IndexOutOfRange("dense_system: pair index");
    const Matrix h11 = hessian_block(s, loss_grad, m, m).materialize();
    const Matrix h12 = hessian_block(s, loss_grad, m, m + 1).materialize();
    const Matrix h22 = hessian_block(s, loss_grad, m + 1, m + 1).materialize();

    DenseSystem sys;
    sys.m = Matrix(h11.rows, h11.cols);
    for (std::size_t i = 0; i < h11.data.size(); ++i)
        sys.m.data[i] = h11.data[i] + 2.0 * h12.data[i] + h22.data[i];

    const Vector sum_k = add(s.keys[m], s.keys[m + 1]);
    sys.n = matvec(h11, s.keys[m]);
    Vector t = matvec(h12, sum_k);
    for (std::size_t i = 0; i < sys.n.size(); ++i) sys.n[i] += t[i];
    t = matvec(h22, s.keys[m + 1]);
    for (std::size_t i = 0; i < sys.n.size(); ++i) sys.n[i] += t[i];
    return sys;
}

}  // namespace

Vector fd_key_gradient(const Vector& q, const std::vector<Vector>& keys,
                       const std::vector<Vector>& values, const Vector& loss_grad,
                       std::size_t i, const FdConfig& cfg) {
    if (i >= keys.size()) throw IndexOutOfRange("fd_key_gradient: index");
    std::vector<Vector> work = keys;
    const std::size_t dk = keys[i].size();
    Vector grad(dk);
    for (std::size_t c = 0; c < dk; ++c) {
        const double orig = work[i][c];
        work[i][c] = orig + cfg.step;
        const double plus = surrogate_loss(q, work, values, loss_grad);
        work[i][c] = orig - cfg.step;
        const double minus = surrogate_loss(q, work, values, loss_grad);
        work[i][c] = orig;
        grad[c] = (plus - minus) / (2.0 * cfg.step);
    }
    return grad;
}

Matrix fd_hessian_block(const Vector& q, const std::vector<Vector>& keys,
                        const std::vector<Vector>& values, const Vector& loss_grad,
                        std::size_t i, std::size_t j, const FdConfig& cfg,
                        const FdConfig& grad_cfg) {
    if (i >= keys.size() || j >= keys.size()) throw IndexOutOfRange("fd_hessian_block: index");
    std::vector<Vector> work = keys;
    const std::size_t dk = keys[i].size();
    Matrix h(dk, dk);
    for (std::size_t c = 0; c < dk; ++c) {
        const double orig = work[j][c];
        work[j][c] = orig + cfg.step;
        const Vector plus = fd_key_gradient(q, work, values, loss_grad, i, grad_cfg);
        work[j][c] = orig - cfg.step;
        const Vector minus = fd_key_gradient(q, work, values, loss_grad, i, grad_cfg);
        work[j][c] = orig;
        for (std::size_t r = 0; r < dk; ++r) h(r, c) = (plus[r] - minus[r]) / (2.0 * cfg.step);
    }
    return h;
}

Vector dense_merge_oracle(const AttentionSnapshot& s, const Vector& loss_grad, std::size_t m) {
    const DenseSystem sys = dense_system(s, loss_grad, m);
    const SvdResult f = svd(sys.m);
    const double cutoff = 1e-10 * (f.sigma.empty() ? 0.0 : f.sigma[0]);
    bool any = false;
    // M⁺ N = V diag(1/σ) Uᵀ N over retained singular values
    Vector utn(f.sigma.size(), 0.0);
    for (std::size_t k = 0; k < f.sigma.size(); ++k) {
        double sum = 0.0;
        for (std::size_t r = 0; r < f.u.rows; ++r) sum += f.u(r, k) * sys.n[r];
        utn[k] = sum;
    }
    Vector out(sys.m.cols, 0.0);
    for (std::size_t k = 0; k < f.sigma.size(); ++k) {
        if (f.sigma[k] <= cutoff || f.sigma[k] == 0.0) continue;
        any = true;
        const double w = utn[k] / f.sigma[k];
        for (std::size_t c = 0; c < sys.m.cols; ++c) out[c] += w * f.vt(k, c);
    }
    if (!any) throw DegenerateSystem("dense_merge_oracle: all singular values below cutoff");
    return out;
}

AlignmentReport alignment_report(const AttentionSnapshot& s, const Vector& loss_grad,
                                 std::size_t m) {
    const SensitivityTriple t = sensitivity_vectors(s, m);
    AlignmentReport r;
    r.cos_e_c11 = cosine(loss_grad, t.c11);
    r.cos_e_c22 = cosine(loss_grad, t.c22);
    r.cos_e_c12 = cosine(loss_grad, t.c12);
    r.max_deviation = std::max(std::abs(r.cos_e_c11 - r.cos_e_c22),
                               std::abs(r.cos_e_c11 + r.cos_e_c12));
    return r;
}

double quadratic_objective_value(const AttentionSnapshot& s, const Vector& loss_grad,
                                 std::size_t m, const Vector& k_candidate) {
    const DenseSystem sys = dense_system(s, loss_grad, m);
    const Vector mk = matvec(sys.m, k_candidate);
    return 0.5 * dot(k_candidate, mk) - dot(k_candidate, sys.n);
}

double quadratic_model_slope(const AttentionSnapshot& s, const Vector& loss_grad,
                             std::size_t m, const Vector& k_candidate, const Vector& dir) {
    const DenseSystem sys = dense_system(s, loss_grad, m);
    Vector g = matvec(sys.m, k_candidate);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= sys.n[i];
    const double dn = norm2(dir);
    if (dn <= kDegenerateEps) throw DegenerateDirection("quadratic_model_slope: zero direction");
    return dot(dir, g) / dn;
}

}  // namespace kvslim
