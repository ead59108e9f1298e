#include "hubvae/distributions.hpp"

#include <cmath>

#include "hubvae/errors.hpp"

namespace hubvae {

namespace {

constexpr Scalar kLog2Pi = 1.8378770664093454836;  // ln(2*pi)

void check_dims(Index a, Index b, const char* what) {
    if (a != b) {
        throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                             " vs " + std::to_string(b) + ")");
    }
}

}  // namespace

Scalar wasserstein2_raw(const Eigen::Ref<const Vector>& mean_p, const Eigen::Ref<const Vector>& std_p,
                        const Eigen::Ref<const Vector>& mean_q, const Eigen::Ref<const Vector>& std_q) {
    check_dims(mean_p.size(), mean_q.size(), "wasserstein2");
    const Scalar mean_term = (mean_p - mean_q).squaredNorm();
    const Scalar cov_term = (std_p - std_q).squaredNorm();
    return std::sqrt(mean_term + cov_term);
}

Scalar wasserstein2(const DiagGaussian& p, const DiagGaussian& q) {
    return wasserstein2_raw(p.mean, p.var.cwiseSqrt(), q.mean, q.var.cwiseSqrt());
}

Scalar wasserstein2(const IsoGaussian& p, const DiagGaussian& q) {
    return wasserstein2(p.as_diag(), q);
}

Scalar wasserstein2(const DiagGaussian& p, const IsoGaussian& q) {
    return wasserstein2(p, q.as_diag());
}

Scalar wasserstein2(const IsoGaussian& p, const IsoGaussian& q) {
    return wasserstein2(p.as_diag(), q.as_diag());
}

Scalar log_density(const DiagGaussian& p, const Eigen::Ref<const Vector>& z) {
    check_dims(p.dim(), z.size(), "log_density");
    if ((p.var.array() <= 0.0).any() || !p.var.allFinite()) {
        throw NumericError("log_density: nonpositive or non-finite variance");
    }
    const Scalar quad = ((z - p.mean).array().square() / p.var.array()).sum();
    const Scalar logdet = p.var.array().log().sum();
    return -0.5 * (static_cast<Scalar>(p.dim()) * kLog2Pi + logdet + quad);
}

Scalar log_density(const IsoGaussian& p, const Eigen::Ref<const Vector>& z) {
    check_dims(p.dim(), z.size(), "log_density");
    if (!(p.var > 0.0) || !std::isfinite(p.var)) {
        throw NumericError("log_density: nonpositive or non-finite variance");
    }
    const Scalar d = static_cast<Scalar>(p.dim());
    const Scalar quad = (z - p.mean).squaredNorm() / p.var;
    return -0.5 * (d * kLog2Pi + d * std::log(p.var) + quad);
}

Scalar kl_diag_gaussians(const DiagGaussian& q, const IsoGaussian& p) {
    check_dims(q.dim(), p.dim(), "kl_diag_gaussians");
    // 0.5 * sum_d [ v_d/s2 + (mu_q,d - mu_p,d)^2/s2 - 1 - ln(v_d/s2) ]
    const Scalar s2 = p.var;
    Scalar kl = 0.0;
    for (Index d = 0; d < q.dim(); ++d) {
        const Scalar ratio = q.var(d) / s2;
        const Scalar dm = q.mean(d) - p.mean(d);
        kl += ratio + dm * dm / s2 - 1.0 - std::log(ratio);
    }
    return 0.5 * kl;
}

Scalar bernoulli_loglik(const Eigen::Ref<const Vector>& probs, const Eigen::Ref<const Vector>& x) {
    check_dims(probs.size(), x.size(), "bernoulli_loglik");
    return (x.array() * probs.array().log() +
            (1.0 - x.array()) * (1.0 - probs.array()).log())
        .sum();
}

Scalar logsumexp(const Eigen::Ref<const Vector>& v) {
    if (v.size() == 0) throw DimensionError("logsumexp: empty vector");
    const Scalar m = v.maxCoeff();
    if (!std::isfinite(m)) return m;  // all -inf, or +inf dominates
    return m + std::log((v.array() - m).exp().sum());
}

Scalar mc_kl_mixture(const DiagGaussian& q, const std::vector<IsoGaussian>& components,
                     int n_samples, Rng& rng) {
    if (components.empty()) throw ParameterError("mc_kl_mixture: no mixture components");
    std::normal_distribution<Scalar> normal(0.0, 1.0);
    const Index d = q.dim();
    const Scalar log_m = std::log(static_cast<Scalar>(components.size()));
    const Vector sigma = q.var.cwiseSqrt();
    Scalar acc = 0.0;
    Vector z(d), logr(static_cast<Index>(components.size()));
    for (int s = 0; s < n_samples; ++s) {
        for (Index i = 0; i < d; ++i) z(i) = q.mean(i) + sigma(i) * normal(rng);
        for (std::size_t j = 0; j < components.size(); ++j)
            logr(static_cast<Index>(j)) = log_density(components[j], z);
        acc += log_density(q, z) - logsumexp(logr) + log_m;
    }
    return acc / static_cast<Scalar>(n_samples);
}

}  // namespace hubvae
