#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "kvslim/numerics.hpp"

using namespace kvslim;

namespace {

Vector random_vector(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> d;
    Vector v(n);
    for (double& x : v) x = d(rng);
    return v;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
    std::normal_distribution<double> d;
    Matrix m(r, c);
    for (double& x : m.data) x = d(rng);
    return m;
}

double max_abs(const Matrix& m) {
    double w = 0.0;
    for (double v : m.data) w = std::max(w, std::abs(v));
    return w;
}

}  // namespace

TEST_CASE("softmax basics") {
    CHECK(softmax({0.0, 0.0}) == Vector{0.5, 0.5});
    CHECK(softmax({-17.25}) == Vector{1.0});
    // independently: e/(e+1)
    const double e = std::exp(1.0);
    const Vector s = softmax({1.0, 0.0});
    CHECK(s[0] == doctest::Approx(e / (e + 1.0)).epsilon(1e-5));
    CHECK(s[1] == doctest::Approx(1.0 / (e + 1.0)).epsilon(1e-5));
    CHECK(s[0] == doctest::Approx(0.73106).epsilon(1e-4));
}

TEST_CASE("softmax sums to one and is shift invariant") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 50; ++t) {
        Vector logits = random_vector(rng, 1 + t % 12);
        Vector s = softmax(logits);
        double sum = 0.0;
        for (double v : s) {
            CHECK(v > 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);

        Vector shifted = logits;
        for (double& v : shifted) v += 3.75;
        Vector s2 = softmax(shifted);
        for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(s[i] - s2[i]) < 1e-12);
    }
    CHECK_THROWS_AS(softmax({}), EmptySequence);
}

TEST_CASE("svd of identity and diagonal") {
    const SvdResult f = svd(Matrix::identity(3));
    for (double s : f.sigma) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));

    Matrix d(2, 2);
    d(0, 0) = 2.0;
    d(1, 1) = 1.0;
    const SvdResult g = svd(d);
    CHECK(g.sigma[0] == doctest::Approx(2.0));
    CHECK(g.sigma[1] == doctest::Approx(1.0));
    // signed permutations
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c) {
            CHECK(std::abs(std::abs(g.u(r, c)) - (r == c ? 1.0 : 0.0)) < 1e-12);
            CHECK(std::abs(std::abs(g.vt(r, c)) - (r == c ? 1.0 : 0.0)) < 1e-12);
        }
}

TEST_CASE("svd reconstruction and orthonormality on random matrices") {
    std::mt19937_64 rng(11);
    for (auto [r, c] : {std::pair<std::size_t, std::size_t>{8, 8}, {16, 8}, {5, 9}}) {
        const Matrix m = random_matrix(rng, r, c);
        const SvdResult f = svd(m);
        for (std::size_t i = 0; i + 1 < f.sigma.size(); ++i) {
            CHECK(f.sigma[i] >= f.sigma[i + 1]);
            CHECK(f.sigma[i + 1] >= 0.0);
        }
        // U diag(sigma) Vt == m
        Matrix rec(r, c);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < f.sigma.size(); ++k)
                    s += f.u(i, k) * f.sigma[k] * f.vt(k, j);
                rec(i, j) = s;
            }
        for (std::size_t i = 0; i < rec.data.size(); ++i) rec.data[i] -= m.data[i];
        CHECK(frobenius_norm(rec) / frobenius_norm(m) < 1e-8);

        Matrix utu = matmul(transpose(f.u), f.u);
        Matrix vvt = matmul(f.vt, transpose(f.vt));
        for (std::size_t i = 0; i < utu.rows; ++i) utu(i, i) -= 1.0;
        for (std::size_t i = 0; i < vvt.rows; ++i) vvt(i, i) -= 1.0;
        CHECK(max_abs(utu) < 1e-10);
        CHECK(max_abs(vvt) < 1e-10);
    }
}

TEST_CASE("svd handles rank deficiency") {
    Matrix d(2, 2);
    d(0, 0) = 3.0;
    const SvdResult f = svd(d);
    CHECK(f.sigma[0] == doctest::Approx(3.0));
    CHECK(f.sigma[1] == doctest::Approx(0.0));
    Matrix utu = matmul(transpose(f.u), f.u);
    for (std::size_t i = 0; i < 2; ++i) utu(i, i) -= 1.0;
    CHECK(max_abs(utu) < 1e-10);
}

TEST_CASE("project_onto") {
    CHECK(project_onto({1.0, 0.0}, {3.0, 4.0}) == Vector{3.0, 0.0});

    const Vector q = {2.0, -1.0, 0.5};
    const Vector b = scale(q, -1.75);
    const Vector p = project_onto(q, b);
    for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(b[i]).epsilon(1e-14));

    std::mt19937_64 rng(3);
    for (int t = 0; t < 30; ++t) {
        const Vector q16 = random_vector(rng, 16);
        const Vector b16 = random_vector(rng, 16);
        const Vector proj = project_onto(q16, b16);
        CHECK(std::abs(dot(q16, sub(b16, proj))) < 1e-12);
        // idempotence
        const Vector twice = project_onto(q16, proj);
        for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(twice[i] - proj[i]) < 1e-12);
    }
    CHECK_THROWS_AS(project_onto(Vector(4, 0.0), Vector(4, 1.0)), DegenerateDirection);
}

TEST_CASE("cosine") {
    const Vector a = {1.0, 2.0, -0.5};
    CHECK(cosine(a, a) == doctest::Approx(1.0));
    CHECK(cosine({1.0, 0.0}, {0.0, 2.0}) == doctest::Approx(0.0));
    CHECK(cosine(a, scale(a, -3.0)) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(cosine(a, Vector(3, 0.0)), DegenerateDirection);
    CHECK_THROWS_AS(dot({1.0}, {1.0, 2.0}), DimensionMismatch);
}
