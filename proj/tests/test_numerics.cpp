#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "helpers.hpp"
#include "hubvae/errors.hpp"
#include "hubvae/model.hpp"
#include "hubvae/params.hpp"
#include "hubvae/types.hpp"

using namespace hubvae;
using hubvae::testing::FdProblem;
using hubvae::testing::finite_difference_check;
using hubvae::testing::random_fd_problem;

TEST_CASE("matmul basics") {
    Matrix a(2, 2);
    a << 1, 2, 3, 4;
    CHECK(matmul(a, Matrix::Identity(2, 2)) == a);

    Matrix col(2, 1);
    col << 5, 7;
    CHECK(matmul(Matrix::Identity(2, 2), col) == col);

    Matrix ones(2, 1);
    ones << 1, 1;
    Matrix expect(2, 1);
    expect << 3, 7;
    CHECK(matmul(a, ones) == expect);

    CHECK_THROWS_AS(matmul(a, Matrix::Zero(3, 2)), DimensionError);
}

TEST_CASE("adam_step: zero gradient leaves parameters unchanged") {
    Arch arch{3, 4, 2};
    ParamSet p = init_params(arch, 1);
    const ParamSet before = p;
    AdamState s = init_adam(p, 0.1);
    adam_step(p, p.zeros_like(), s);
    for (const auto& [name, t] : p.tensors) {
        CHECK(t == before.at(name));
    }
}

TEST_CASE("adam_step: hand-computed first step with normalization") {
    // single scalar block, grad 4 -> normalized to 1; first bias-corrected
    // Adam step equals lr * 1 / (1 + eps)
    ParamSet p;
    p.tensors["w"] = Matrix::Constant(1, 1, 2.0);
    ParamSet g = p.zeros_like();
    g.at("w")(0, 0) = 4.0;
    AdamState s = init_adam(p, 0.1);
    adam_step(p, g, s);
    const Scalar expected = 2.0 - 0.1 * 1.0 / (1.0 + 1e-8);
    CHECK(p.at("w")(0, 0) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("adam_step: constant gradient direction moves monotonically") {
    ParamSet p;
    p.tensors["w"] = Matrix::Constant(1, 1, 1.0);
    ParamSet g = p.zeros_like();
    g.at("w")(0, 0) = 0.3;
    AdamState s = init_adam(p, 0.05);
    Scalar prev = p.at("w")(0, 0);
    for (int step = 0; step < 2; ++step) {
        adam_step(p, g, s);
        CHECK(p.at("w")(0, 0) < prev);
        prev = p.at("w")(0, 0);
    }
}

TEST_CASE("gradient-block normalization yields unit norms") {
    // inspect the effective step at t=1: m_hat = g_normalized, so checking
    // the stored first moment against (1 - beta1) * unit-norm block
    FdProblem prob = random_fd_problem(42);
    StepResult res = forward_backward(prob.params, prob.batch, prob.spec);
    AdamState s = init_adam(prob.params);
    ParamSet p = prob.params;
    adam_step(p, res.grads, s);
    for (const auto& [name, g] : res.grads.tensors) {
        const Scalar norm = g.norm();
        if (norm < 1e-12) continue;
        const Scalar moment_norm = s.m.at(name).norm() / (1.0 - s.beta1);
        CHECK(moment_norm == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("forward_backward: zero-weight loss spec gives zero loss and grads") {
    FdProblem prob = random_fd_problem(7);
    prob.spec.weight_recon = 0.0;
    prob.spec.weight_contrastive = 0.0;
    prob.spec.beta = 0.0;
    const StepResult res = forward_backward(prob.params, prob.batch, prob.spec);
    CHECK(res.breakdown.total == 0.0);
    for (const auto& [name, g] : res.grads.tensors) CHECK(g.isZero(0.0));
}

TEST_CASE("forward_backward: perfect single-datum reconstruction hits the clamp floor") {
    // a decoder whose output equals the (binary) input exactly has the
    // Bernoulli loss of the clamped probabilities
    Arch arch{4, 6, 2};
    ParamSet p = init_params(arch, 3);
    Matrix x(1, 4);
    x << 1, 0, 1, 1;
    // force saturated logits by a huge output bias towards x
    p.at("dec.Wout").setZero();
    for (Index j = 0; j < 4; ++j) p.at("dec.bout")(0, j) = x(0, j) > 0.5 ? 50.0 : -50.0;
    LossSpec spec;
    spec.beta = 0.0;
    spec.weight_contrastive = 0.0;
    spec.noise = Matrix::Zero(1, 2);
    const LossBreakdown b = total_loss(p, x, spec);
    Vector probs = Vector::Constant(4, kProbClampHi);
    probs(1) = kProbClampLo;
    const Scalar expected = -bernoulli_loglik(probs, x.row(0).transpose());
    CHECK(b.recon == doctest::Approx(expected).epsilon(1e-12));
    CHECK(b.recon < 1e-4);
}

TEST_CASE("finite-difference oracle over random small networks") {
    int checked = 0;
    for (std::uint64_t seed = 100; seed < 112; ++seed) {
        const FdProblem prob = random_fd_problem(seed);
        const auto report = finite_difference_check(prob);
        CAPTURE(seed);
        CHECK(report.frac_ok >= 0.99);
        ++checked;
    }
    CHECK(checked == 12);
}

TEST_CASE("finite-difference oracle for the baseline Gaussian objective") {
    for (std::uint64_t seed = 300; seed < 304; ++seed) {
        FdProblem prob = random_fd_problem(seed, /*baseline=*/true);
        const auto report = finite_difference_check(prob);
        CAPTURE(seed);
        CHECK(report.frac_ok >= 0.99);
    }
}

TEST_CASE("forward_backward is bitwise deterministic") {
    const FdProblem prob = random_fd_problem(55);
    const StepResult a = forward_backward(prob.params, prob.batch, prob.spec);
    const StepResult b = forward_backward(prob.params, prob.batch, prob.spec);
    CHECK(std::memcmp(&a.breakdown.total, &b.breakdown.total, sizeof(Scalar)) == 0);
    for (const auto& [name, g] : a.grads.tensors) {
        const Matrix& g2 = b.grads.at(name);
        REQUIRE(g.rows() == g2.rows());
        REQUIRE(std::memcmp(g.data(), g2.data(),
                            sizeof(Scalar) * static_cast<std::size_t>(g.size())) == 0);
    }
}

TEST_CASE("non-finite parameters raise a numeric error naming the term") {
    FdProblem prob = random_fd_problem(77);
    prob.params.at("enc.W1")(0, 0) = std::numeric_limits<Scalar>::quiet_NaN();
    CHECK_THROWS_AS(forward_backward(prob.params, prob.batch, prob.spec), NumericError);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    Arch arch{5, 7, 3};
    ParamSet p = init_params(arch, 9, 0.64);
    p.at("enc.W1")(0, 0) = 0.1 + 0.2;  // a value with a non-terminating binary expansion
    const std::string path = "ckpt_roundtrip.bin";
    save_checkpoint(path, p);
    const ParamSet q = load_checkpoint(path);
    REQUIRE(q.tensors.size() == p.tensors.size());
    for (const auto& [name, t] : p.tensors) {
        const Matrix& t2 = q.at(name);
        REQUIRE(t2.rows() == t.rows());
        REQUIRE(t2.cols() == t.cols());
        REQUIRE(std::memcmp(t.data(), t2.data(),
                            sizeof(Scalar) * static_cast<std::size_t>(t.size())) == 0);
    }
    std::remove(path.c_str());
}

TEST_CASE("checkpoint loader rejects corrupt files") {
    const std::string path = "ckpt_corrupt.bin";
    {
        std::ofstream out(path, std::ios::binary);
        out << "JUNKJUNK";
    }
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_checkpoint("does_not_exist.bin"), IoError);
}
