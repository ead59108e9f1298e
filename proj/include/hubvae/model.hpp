#pragma once

#include <optional>
#include <vector>

#include "hubvae/distributions.hpp"
#include "hubvae/hubness.hpp"
#include "hubvae/params.hpp"
#include "hubvae/rng.hpp"
#include "hubvae/types.hpp"

namespace hubvae {

// Contrastive triplet: anchor and positive share the proxy cluster label,
// every negative's label differs. All indices are batch-local.
struct Triplet {
    Index anchor = 0;
    Index positive = 0;
    std::vector<Index> negatives;
};

struct EncoderOutput {
    Matrix mu;    // B x d posterior means
    Matrix var;   // B x d posterior variances (softplus + 1e-6)
    Matrix z;     // B x d reparameterized samples, z = mu + sqrt(var) .* eps
    Matrix eps;   // the noise actually used, recorded for reproducibility

    DiagGaussian posterior(Index row) const;
    std::vector<DiagGaussian> posteriors() const;
};

// Mixture prior for one step: component means from the shared encoder applied
// to the sampled hub inputs, one scalar variance exp(tau) for all components.
struct HubPriorBatch {
    Matrix means;       // m x d
    Scalar var = 1.0;   // exp(tau)

    Index components() const { return means.rows(); }
    IsoGaussian component(Index j) const;
};

struct LossBreakdown {
    Scalar recon = 0.0;
    Scalar kl = 0.0;
    Scalar contrastive = 0.0;
    Scalar beta = 1.0;
    Scalar total = 0.0;  // recon + contrastive + beta * kl
};

// Selects the active loss terms for one forward/backward pass. Noise is drawn
// by the caller so a pass is a pure function of its inputs.
struct LossSpec {
    Scalar weight_recon = 1.0;
    Scalar weight_contrastive = 1.0;
    Scalar beta = 1.0;
    // Closed-form KL to N(0, I) instead of the hub mixture (baseline VAE).
    bool baseline_gaussian = false;
    Matrix hub_inputs;  // m x D; required when beta != 0 and not baseline
    std::vector<Triplet> triplets;
    Matrix noise;  // B x d
};

struct StepResult {
    LossBreakdown breakdown;
    ParamSet grads;
    EncoderOutput enc;
};

EncoderOutput encode(const ParamSet& params, const Eigen::Ref<const Matrix>& x_batch,
                     const Eigen::Ref<const Matrix>& noise);
EncoderOutput encode_mean(const ParamSet& params, const Eigen::Ref<const Matrix>& x_batch);

// Encoder mean head only; used for hub prior components.
Matrix encode_mu(const ParamSet& params, const Eigen::Ref<const Matrix>& x_batch);

// Bernoulli probabilities, logistic outputs clamped to [1e-6, 1 - 1e-6].
Matrix decode(const ParamSet& params, const Eigen::Ref<const Matrix>& z_batch);

Scalar loss_recon(const Eigen::Ref<const Matrix>& x_batch, const Eigen::Ref<const Matrix>& probs);

// Single-sample Monte-Carlo KL against the mixture, averaged over rows:
//   log q_i(z_i) - logsumexp_j log r_j(z_i) + ln m.
Scalar loss_kl_mixture(const EncoderOutput& enc, const HubPriorBatch& prior);

// Hinge with margin 1 on 2-Wasserstein distances, summed over each anchor's
// negatives and averaged over batch rows. Anchors without triplets
// contribute 0.
Scalar loss_contrastive(const std::vector<Triplet>& triplets, const EncoderOutput& enc);

// Scalar loss plus exact gradients of every parameter (tau included).
// Deterministic given (params, batch, spec). Throws NumericError naming the
// term when a loss component is non-finite.
StepResult forward_backward(const ParamSet& params, const Eigen::Ref<const Matrix>& x_batch,
                            const LossSpec& spec);

// Breakdown only (shares the forward path of forward_backward).
LossBreakdown total_loss(const ParamSet& params, const Eigen::Ref<const Matrix>& x_batch,
                         const LossSpec& spec);

// Validation objective: recon + beta * KL against the mixture over ALL pool
// hubs, no contrastive term. Noise comes from the supplied RNG (a
// validation-dedicated stream during training).
Scalar validation_loss(const ParamSet& params, const Eigen::Ref<const Matrix>& x_val,
                       const Eigen::Ref<const Matrix>& pool_hub_inputs, Scalar beta, Rng& rng);

struct Generation {
    Matrix probs;    // count x D decoded Bernoulli probabilities
    Matrix samples;  // count x D Bernoulli draws from probs
};

// Conditional generation from one hub: z ~ N(mu(x_hub), exp(tau) I), decoded.
Generation generate(const ParamSet& params, const Eigen::Ref<const Matrix>& hub_input,
                    Index count, std::uint64_t seed);

}  // namespace hubvae
