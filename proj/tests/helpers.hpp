#pragma once

// Shared fixtures for the test suites: random loss configurations, a central
// finite-difference runner (the gradient oracle), and small dataset builders.

#include <cmath>
#include <random>
#include <vector>

#include "hubvae/dataio.hpp"
#include "hubvae/model.hpp"
#include "hubvae/params.hpp"
#include "hubvae/training.hpp"

namespace hubvae::testing {

struct FdProblem {
    ParamSet params;
    Matrix batch;
    LossSpec spec;
};

// The total loss is only piecewise smooth: ReLU and hinge kinks and the
// sqrt at coincident posteriors have no derivative. A finite-difference
// oracle is meaningful at smooth points, so candidate problems whose
// pre-activations, hinge arguments, pairwise Wasserstein distances or
// decoder probabilities sit within a margin of a kink are rejected and
// redrawn. Margins are far above h = 1e-5 yet cheap to satisfy.
inline bool fd_problem_is_smooth(const FdProblem& prob) {
    constexpr Scalar margin = 1e-3;
    const auto& p = prob.params;
    auto preacts_ok = [&](const Matrix& x) {
        Matrix a1 = x * p.at("enc.W1");
        a1.rowwise() += p.at("enc.b1").row(0);
        if (a1.cwiseAbs().minCoeff() < margin) return false;
        Matrix a2 = a1.cwiseMax(0.0) * p.at("enc.W2");
        a2.rowwise() += p.at("enc.b2").row(0);
        return a2.cwiseAbs().minCoeff() >= margin;
    };
    if (!preacts_ok(prob.batch)) return false;
    if (prob.spec.hub_inputs.size() > 0 && !preacts_ok(prob.spec.hub_inputs)) return false;

    const EncoderOutput enc = encode(p, prob.batch, prob.spec.noise);
    Matrix b1 = enc.z * p.at("dec.W1");
    b1.rowwise() += p.at("dec.b1").row(0);
    if (b1.cwiseAbs().minCoeff() < margin) return false;
    Matrix b2 = b1.cwiseMax(0.0) * p.at("dec.W2");
    b2.rowwise() += p.at("dec.b2").row(0);
    if (b2.cwiseAbs().minCoeff() < margin) return false;
    const Matrix probs = decode(p, enc.z);
    if (probs.minCoeff() <= kProbClampLo * 2 || probs.maxCoeff() >= 1.0 - 2e-6) return false;

    const Matrix sd = enc.var.cwiseSqrt();
    auto wdist = [&](Index i, Index j) {
        return std::sqrt((enc.mu.row(i) - enc.mu.row(j)).squaredNorm() +
                         (sd.row(i) - sd.row(j)).squaredNorm());
    };
    for (Index i = 0; i < prob.batch.rows(); ++i)
        for (Index j = i + 1; j < prob.batch.rows(); ++j)
            if (wdist(i, j) < margin) return false;
    for (const auto& t : prob.spec.triplets) {
        const Scalar w_ap = wdist(t.anchor, t.positive);
        for (Index n : t.negatives) {
            if (std::abs(w_ap - wdist(t.anchor, n) + 1.0) < margin) return false;
        }
    }
    return true;
}

// Random small network + batch + active triplets, sized for finite
// differencing (D <= 16, d <= 4, B <= 8, m <= 4). Biases are randomized so
// dead layers cannot pin pre-activations to exactly zero; kink-adjacent
// draws are rejected (see fd_problem_is_smooth).
inline FdProblem random_fd_problem(std::uint64_t seed, bool baseline_gaussian = false) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(derive_seed(seed, 0xfd, attempt));
        std::uniform_int_distribution<Index> pickD(3, 16), pickd(1, 4), pickB(4, 8), pickm(1, 4),
            pickh(4, 8);
        Arch arch;
        arch.input_dim = pickD(rng);
        arch.latent_dim = pickd(rng);
        arch.hidden_dim = pickh(rng);
        const Index B = pickB(rng);
        const Index m = pickm(rng);

        FdProblem prob;
        prob.params = init_params(arch, rng());
        std::uniform_real_distribution<Scalar> bias(-0.3, 0.3);
        for (auto& [name, t] : prob.params.tensors) {
            if (name.find(".b") != std::string::npos) {
                for (Index j = 0; j < t.cols(); ++j) t(0, j) = bias(rng);
            }
        }
        std::uniform_real_distribution<Scalar> u01(0.0, 1.0);
        prob.batch.resize(B, arch.input_dim);
        for (Index i = 0; i < B; ++i)
            for (Index j = 0; j < arch.input_dim; ++j) prob.batch(i, j) = u01(rng);

        prob.spec.noise = gaussian_matrix(B, arch.latent_dim, rng);
        prob.spec.baseline_gaussian = baseline_gaussian;
        if (!baseline_gaussian) {
            prob.spec.hub_inputs.resize(m, arch.input_dim);
            for (Index i = 0; i < m; ++i)
                for (Index j = 0; j < arch.input_dim; ++j) prob.spec.hub_inputs(i, j) = u01(rng);
        }

        // random labels over the batch, triplets by the selection rule's
        // shape: positive shares the label, negatives do not
        std::uniform_int_distribution<int> lab(0, 1);
        std::vector<int> labels(static_cast<std::size_t>(B));
        labels[0] = 0;
        labels[1] = 1;  // both labels present
        for (Index i = 2; i < B; ++i) labels[static_cast<std::size_t>(i)] = lab(rng);
        for (Index a = 0; a < B; ++a) {
            Triplet t;
            t.anchor = a;
            bool has_pos = false;
            for (Index j = 0; j < B; ++j) {
                if (j == a) continue;
                if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(a)]) {
                    t.positive = j;
                    has_pos = true;
                } else {
                    t.negatives.push_back(j);
                }
            }
            if (has_pos && !t.negatives.empty()) prob.spec.triplets.push_back(std::move(t));
        }
        if (fd_problem_is_smooth(prob) || attempt > 50) return prob;
    }
}

struct FdReport {
    double max_rel_err = 0.0;       // over the coordinates that pass
    double frac_ok = 1.0;           // fraction of coordinates within tolerance
    long total_coords = 0;
};

// Central differences with step h against the analytic gradients. Relative
// error uses max(|analytic|, |numeric|, 1e-4) as denominator so that
// near-zero coordinates are judged on an absolute scale well above the
// quadrature noise of the difference itself.
inline FdReport finite_difference_check(const FdProblem& prob, double h = 1e-5,
                                        double tol = 1e-4) {
    const StepResult res = forward_backward(prob.params, prob.batch, prob.spec);
    FdReport report;
    long ok = 0;
    for (const auto& [name, grads] : res.grads.tensors) {
        for (Index i = 0; i < grads.rows(); ++i) {
            for (Index j = 0; j < grads.cols(); ++j) {
                ParamSet plus = prob.params;
                plus.at(name)(i, j) += h;
                ParamSet minus = prob.params;
                minus.at(name)(i, j) -= h;
                const Scalar lp = forward_backward(plus, prob.batch, prob.spec).breakdown.total;
                const Scalar lm = forward_backward(minus, prob.batch, prob.spec).breakdown.total;
                const Scalar numeric = (lp - lm) / (2.0 * h);
                const Scalar analytic = grads(i, j);
                const Scalar denom = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
                const Scalar rel = std::abs(analytic - numeric) / denom;
                report.total_coords++;
                if (rel < tol) {
                    ok++;
                    report.max_rel_err = std::max(report.max_rel_err, rel);
                }
            }
        }
    }
    report.frac_ok = static_cast<double>(ok) / static_cast<double>(report.total_coords);
    return report;
}

// Well-separated blob fixture used across the end-to-end tests.
inline Dataset separated_blobs(int clusters, Index dim, Index per_cluster, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.clusters = clusters;
    spec.dim = dim;
    spec.per_cluster = per_cluster;
    spec.center_spread = 8.0;
    spec.within_std = 0.25;
    spec.seed = seed;
    return make_synthetic(spec);
}

}  // namespace hubvae::testing
