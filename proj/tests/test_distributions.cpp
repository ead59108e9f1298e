#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "hubvae/distributions.hpp"
#include "hubvae/errors.hpp"

using namespace hubvae;

namespace {

DiagGaussian diag(std::initializer_list<Scalar> mean, std::initializer_list<Scalar> var) {
    DiagGaussian g;
    g.mean = Eigen::Map<const Vector>(std::data(mean), static_cast<Index>(mean.size()));
    g.var = Eigen::Map<const Vector>(std::data(var), static_cast<Index>(var.size()));
    return g;
}

DiagGaussian random_diag(Index dim, Rng& rng) {
    std::uniform_real_distribution<Scalar> u(-3.0, 3.0);
    std::uniform_real_distribution<Scalar> uv(0.05, 4.0);
    DiagGaussian g;
    g.mean.resize(dim);
    g.var.resize(dim);
    for (Index i = 0; i < dim; ++i) {
        g.mean(i) = u(rng);
        g.var(i) = uv(rng);
    }
    return g;
}

}  // namespace

TEST_CASE("wasserstein2 analytic examples") {
    const auto p = diag({1.0, -2.0}, {0.5, 2.0});
    CHECK(wasserstein2(p, p) == 0.0);

    // variance terms cancel: pure Euclidean mean distance
    const auto a = diag({0.0, 0.0}, {1.0, 1.0});
    const auto b = diag({3.0, 4.0}, {1.0, 1.0});
    CHECK(wasserstein2(a, b) == doctest::Approx(5.0).epsilon(1e-12));

    // equal means, var 4 vs 1 per dim: sqrt((2-1)^2 * 2) = sqrt(2)
    const auto c = diag({1.0, 1.0}, {4.0, 4.0});
    const auto d = diag({1.0, 1.0}, {1.0, 1.0});
    CHECK(wasserstein2(c, d) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("wasserstein2 isotropic expansion matches diagonal form") {
    IsoGaussian iso;
    iso.mean = Vector::Zero(3);
    iso.var = 2.5;
    const auto q = diag({0.5, -0.5, 1.0}, {1.0, 2.0, 0.25});
    const auto expanded = diag({0.0, 0.0, 0.0}, {2.5, 2.5, 2.5});
    CHECK(wasserstein2(iso, q) == doctest::Approx(wasserstein2(expanded, q)).epsilon(1e-15));
}

TEST_CASE("wasserstein2 dimension mismatch throws") {
    const auto p = diag({0.0}, {1.0});
    const auto q = diag({0.0, 0.0}, {1.0, 1.0});
    CHECK_THROWS_AS(wasserstein2(p, q), DimensionError);
}

TEST_CASE("wasserstein2 metric axioms on random triples") {
    Rng rng(20240811);
    for (int trial = 0; trial < 10000; ++trial) {
        const Index dim = 1 + static_cast<Index>(trial % 5);
        const auto a = random_diag(dim, rng);
        const auto b = random_diag(dim, rng);
        const auto c = random_diag(dim, rng);
        const Scalar ab = wasserstein2(a, b);
        const Scalar ba = wasserstein2(b, a);
        const Scalar bc = wasserstein2(b, c);
        const Scalar ac = wasserstein2(a, c);
        REQUIRE(ab == ba);  // symmetry holds exactly
        REQUIRE(ab >= 0.0);
        REQUIRE(ac <= ab + bc + 1e-9);
    }
}

TEST_CASE("log_density evaluates the diagonal Gaussian pdf") {
    const auto std1 = diag({0.0}, {1.0});
    Vector z0 = Vector::Zero(1);
    CHECK(log_density(std1, z0) == doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));

    const auto std2 = diag({0.0, 0.0}, {1.0, 1.0});
    Vector z11 = Vector::Ones(2);
    CHECK(log_density(std2, z11) == doctest::Approx(-std::log(2.0 * M_PI) - 1.0).epsilon(1e-12));

    // the mode maximizes the density
    Rng rng(7);
    const auto g = random_diag(3, rng);
    const Scalar at_mode = log_density(g, g.mean);
    for (int i = 0; i < 50; ++i) {
        Vector z = g.mean + gaussian_matrix(3, 1, rng).col(0);
        CHECK(log_density(g, z) <= at_mode);
    }
}

TEST_CASE("log_density rejects nonpositive variance") {
    DiagGaussian g;
    g.mean = Vector::Zero(2);
    g.var = Vector::Ones(2);
    g.var(1) = 0.0;
    CHECK_THROWS_AS(log_density(g, Vector::Zero(2)), NumericError);
}

TEST_CASE("exp(log_density) integrates to 1 by quadrature") {
    // dim 1
    const auto g1 = diag({0.3}, {0.7});
    const Scalar h1 = 0.01;
    Scalar mass1 = 0.0;
    for (Scalar z = -8.0; z <= 8.0; z += h1) {
        Vector v(1);
        v(0) = z;
        mass1 += std::exp(log_density(g1, v)) * h1;
    }
    CHECK(mass1 == doctest::Approx(1.0).epsilon(0.01));

    // dim 2
    const auto g2 = diag({-0.2, 0.5}, {0.5, 1.5});
    const Scalar h2 = 0.05;
    Scalar mass2 = 0.0;
    for (Scalar x = -7.0; x <= 7.0; x += h2) {
        for (Scalar y = -8.0; y <= 8.0; y += h2) {
            Vector v(2);
            v << x, y;
            mass2 += std::exp(log_density(g2, v)) * h2 * h2;
        }
    }
    CHECK(mass2 == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("kl_diag_gaussians closed-form values") {
    const auto q0 = diag({0.0}, {1.0});
    IsoGaussian p0;
    p0.mean = Vector::Zero(1);
    p0.var = 1.0;
    CHECK(kl_diag_gaussians(q0, p0) == doctest::Approx(0.0).epsilon(1e-15));

    IsoGaussian p1;
    p1.mean = Vector::Ones(1);
    p1.var = 1.0;
    CHECK(kl_diag_gaussians(q0, p1) == doctest::Approx(0.5).epsilon(1e-12));

    const auto q4 = diag({0.0}, {4.0});
    CHECK(kl_diag_gaussians(q4, p0) ==
          doctest::Approx(0.5 * (4.0 - 1.0 - std::log(4.0))).epsilon(1e-12));
}

TEST_CASE("kl_diag_gaussians nonnegative on random pairs, zero iff equal") {
    Rng rng(99);
    for (int trial = 0; trial < 10000; ++trial) {
        const Index dim = 1 + static_cast<Index>(trial % 4);
        const auto q = random_diag(dim, rng);
        std::uniform_real_distribution<Scalar> u(-2.0, 2.0), uv(0.1, 3.0);
        IsoGaussian p;
        p.mean.resize(dim);
        for (Index i = 0; i < dim; ++i) p.mean(i) = u(rng);
        p.var = uv(rng);
        REQUIRE(kl_diag_gaussians(q, p) >= 0.0);
    }
    IsoGaussian p;
    p.mean = Vector::Constant(2, 0.7);
    p.var = 1.3;
    CHECK(kl_diag_gaussians(p.as_diag(), p) == 0.0);
}

TEST_CASE("bernoulli_loglik examples") {
    const Index D = 5;
    Vector x(D);
    x << 1, 0, 1, 1, 0;
    Vector perfect = x.array().min(kProbClampHi).max(kProbClampLo);
    CHECK(bernoulli_loglik(perfect, x) ==
          doctest::Approx(D * std::log(1.0 - 1e-6)).epsilon(1e-9));

    Vector half = Vector::Constant(D, 0.5);
    CHECK(bernoulli_loglik(half, x) == doctest::Approx(D * std::log(0.5)).epsilon(1e-12));

    Vector p2(2), x2(2);
    p2 << 0.9, 0.1;
    x2 << 1, 0;
    CHECK(bernoulli_loglik(p2, x2) == doctest::Approx(2.0 * std::log(0.9)).epsilon(1e-12));

    CHECK_THROWS_AS(bernoulli_loglik(p2, x), DimensionError);
}

TEST_CASE("single-component MC KL converges to the closed form") {
    Rng rng(123);
    // KL = 0
    IsoGaussian p0;
    p0.mean = Vector::Zero(1);
    p0.var = 1.0;
    const Scalar e0 = mc_kl_mixture(p0.as_diag(), {p0}, 100000, rng);
    CHECK(std::abs(e0) < 0.02);

    // KL = 0.5
    const auto q = diag({0.0}, {1.0});
    IsoGaussian p1;
    p1.mean = Vector::Ones(1);
    p1.var = 1.0;
    const Scalar e1 = mc_kl_mixture(q, {p1}, 100000, rng);
    CHECK(e1 == doctest::Approx(0.5).epsilon(0.02));

    // KL = 0.5 (4 - 1 - ln 4) = 0.8068528...
    const auto q4 = diag({0.0}, {4.0});
    const Scalar e2 = mc_kl_mixture(q4, {p0}, 100000, rng);
    CHECK(e2 == doctest::Approx(0.8068528194400547).epsilon(0.02));
}

TEST_CASE("logsumexp is stable and exact on small inputs") {
    Vector v(3);
    v << 0.0, std::log(2.0), std::log(3.0);
    CHECK(logsumexp(v) == doctest::Approx(std::log(6.0)).epsilon(1e-12));
    Vector big = Vector::Constant(4, 1000.0);
    CHECK(logsumexp(big) == doctest::Approx(1000.0 + std::log(4.0)).epsilon(1e-12));
}
