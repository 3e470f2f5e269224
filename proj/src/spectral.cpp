#include "kvslim/spectral.hpp"

#include <cmath>

namespace kvslim {

SpectralProfile spectral_profile(const Matrix& w) {
    SvdResult f = svd(w);
    SpectralProfile p;
    p.lambda.resize(f.sigma.size());
    for (std::size_t i = 0; i < f.sigma.size(); ++i) p.lambda[i] = f.sigma[i] * f.sigma[i];
    p.left_u = std::move(f.u);
    p.source_rows = w.rows;
    p.source_cols = w.cols;
    return p;
}

ModeContributions mode_contributions(const Vector& x_t, const Vector& x_next,
                                     const SpectralProfile& p) {
    if (x_t.size() != p.left_u.rows || x_next.size() != p.left_u.rows)
        throw DimensionMismatch("mode_contributions: token dimension");
    const std::size_t k = p.lambda.size();
    Vector pt(k), pn(k);
    for (std::size_t i = 0; i < k; ++i) {
        double st = 0.0, sn = 0.0;
        for (std::size_t r = 0; r < p.left_u.rows; ++r) {
            st += x_t[r] * p.left_u(r, i);
            sn += x_next[r] * p.left_u(r, i);
        }
        pt[i] = st;
        pn[i] = sn;
    }
    double qt = 0.0, qn = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        qt += p.lambda[i] * pt[i] * pt[i];
        qn += p.lambda[i] * pn[i] * pn[i];
    }
    const double den = std::sqrt(qt) * std::sqrt(qn);
    if (std::sqrt(qt) <= kDegenerateEps || std::sqrt(qn) <= kDegenerateEps)
        throw DegenerateDirection("mode_contributions: token maps to zero in induced metric");

    ModeContributions mc;
    mc.contributions.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        mc.contributions[i] = p.lambda[i] * pt[i] * pn[i] / den;
        mc.total += mc.contributions[i];
    }
    return mc;
}

std::vector<double> adjacent_similarity(const std::vector<Vector>& xs, const Matrix& w) {
    if (xs.size() < 2) throw InsufficientLength("adjacent_similarity: need at least 2 tokens");
    std::vector<double> out;
    out.reserve(xs.size() - 1);
    Vector prev = vecmat(xs[0], w);
    for (std::size_t t = 1; t < xs.size(); ++t) {
        Vector cur = vecmat(xs[t], w);
        out.push_back(cosine(prev, cur));
        prev = std::move(cur);
    }
    return out;
}

ConcentrationStats concentration_stats(const SpectralProfile& p, std::size_t top_k) {
    double sum = 0.0, sum_sq = 0.0, top = 0.0;
    for (std::size_t i = 0; i < p.lambda.size(); ++i) {
        sum += p.lambda[i];
        sum_sq += p.lambda[i] * p.lambda[i];
        if (i < top_k) top += p.lambda[i];
    }
    if (sum <= 0.0) throw DegenerateDirection("concentration_stats: zero spectrum");
    return ConcentrationStats{sum * sum / sum_sq, top / sum};
}

}  // namespace kvslim
