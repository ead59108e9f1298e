#pragma once

#include <vector>

#include "hubvae/rng.hpp"
#include "hubvae/types.hpp"

namespace hubvae {

// Diagonal Gaussian: the variational posterior q(z|x).
struct DiagGaussian {
    Vector mean;
    Vector var;  // per-dimension, strictly positive

    Index dim() const { return mean.size(); }
};

// Isotropic Gaussian: a hub prior component r(z|x_h) with shared scalar
// variance.
struct IsoGaussian {
    Vector mean;
    Scalar var = 1.0;

    Index dim() const { return mean.size(); }
    DiagGaussian as_diag() const { return {mean, Vector::Constant(mean.size(), var)}; }
};

// Closed-form 2-Wasserstein distance between diagonal Gaussians:
//   W(p, q) = sqrt(|mu_p - mu_q|^2 + sum_d (sqrt(v_p,d) - sqrt(v_q,d))^2)
Scalar wasserstein2(const DiagGaussian& p, const DiagGaussian& q);
Scalar wasserstein2(const IsoGaussian& p, const DiagGaussian& q);
Scalar wasserstein2(const DiagGaussian& p, const IsoGaussian& q);
Scalar wasserstein2(const IsoGaussian& p, const IsoGaussian& q);

// Raw form on mean vectors and per-dimension standard deviations; the loss
// code uses this directly on encoder outputs.
Scalar wasserstein2_raw(const Eigen::Ref<const Vector>& mean_p, const Eigen::Ref<const Vector>& std_p,
                        const Eigen::Ref<const Vector>& mean_q, const Eigen::Ref<const Vector>& std_q);

Scalar log_density(const DiagGaussian& p, const Eigen::Ref<const Vector>& z);
Scalar log_density(const IsoGaussian& p, const Eigen::Ref<const Vector>& z);

// KL(q || p) between a diagonal-Gaussian posterior and an isotropic prior
// component, in closed form.
Scalar kl_diag_gaussians(const DiagGaussian& q, const IsoGaussian& p);

// Bernoulli log-likelihood sum_d [x_d ln p_d + (1 - x_d) ln(1 - p_d)].
// probs must already be clamped away from {0, 1}.
Scalar bernoulli_loglik(const Eigen::Ref<const Vector>& probs, const Eigen::Ref<const Vector>& x);

inline constexpr Scalar kProbClampLo = 1e-6;
inline constexpr Scalar kProbClampHi = 1.0 - 1e-6;

Scalar logsumexp(const Eigen::Ref<const Vector>& v);

// Monte-Carlo estimate of KL(q || (1/m) sum_j r_j): draws z ~ q and averages
// log q(z) - logsumexp_j log r_j(z) + ln m. Single-sample version of the
// estimator used by the mixture-prior loss; kl_diag_gaussians is its
// closed-form oracle when m = 1.
Scalar mc_kl_mixture(const DiagGaussian& q, const std::vector<IsoGaussian>& components,
                     int n_samples, Rng& rng);

}  // namespace hubvae
