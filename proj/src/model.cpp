#include "hubvae/model.hpp"

#include <cmath>

#include "hubvae/errors.hpp"

namespace hubvae {

namespace {

constexpr Scalar kLog2Pi = 1.8378770664093454836;
constexpr Scalar kVarFloor = 1e-6;

Matrix relu(const Matrix& a) { return a.cwiseMax(0.0); }

Matrix relu_mask(const Matrix& a) {
    return (a.array() > 0.0).cast<Scalar>().matrix();
}

Matrix softplus(const Matrix& a) {
    // log(1 + exp(a)) evaluated stably for large |a|
    return (a.array().cwiseMax(0.0) + (-a.array().abs()).exp().log1p()).matrix();
}

Matrix sigmoid(const Matrix& a) {
    return (1.0 / (1.0 + (-a.array()).exp())).matrix();
}

struct EncCache {
    Matrix A1, H1, A2, H2, MU, S, VAR;
};

EncCache enc_forward(const ParamSet& p, const Eigen::Ref<const Matrix>& X) {
    EncCache c;
    c.A1 = X * p.at("enc.W1");
    c.A1.rowwise() += p.at("enc.b1").row(0);
    c.H1 = relu(c.A1);
    c.A2 = c.H1 * p.at("enc.W2");
    c.A2.rowwise() += p.at("enc.b2").row(0);
    c.H2 = relu(c.A2);
    c.MU = c.H2 * p.at("enc.Wmu");
    c.MU.rowwise() += p.at("enc.bmu").row(0);
    c.S = c.H2 * p.at("enc.Wvar");
    c.S.rowwise() += p.at("enc.bvar").row(0);
    c.VAR = softplus(c.S).array() + kVarFloor;
    return c;
}

// Accumulates encoder gradients for one forward pass; dVAR may be empty when
// only the mean head received gradients (the hub pass).
void enc_backward(const ParamSet& p, const Eigen::Ref<const Matrix>& X, const EncCache& c,
                  const Matrix& dMU, const Matrix& dVAR, ParamSet& grads) {
    Matrix dH2 = dMU * p.at("enc.Wmu").transpose();
    grads.at("enc.Wmu") += c.H2.transpose() * dMU;
    grads.at("enc.bmu") += dMU.colwise().sum();
    if (dVAR.size() > 0) {
        const Matrix dS = dVAR.cwiseProduct(sigmoid(c.S));  // softplus' = logistic
        dH2 += dS * p.at("enc.Wvar").transpose();
        grads.at("enc.Wvar") += c.H2.transpose() * dS;
        grads.at("enc.bvar") += dS.colwise().sum();
    }
    const Matrix dA2 = dH2.cwiseProduct(relu_mask(c.A2));
    grads.at("enc.W2") += c.H1.transpose() * dA2;
    grads.at("enc.b2") += dA2.colwise().sum();
    const Matrix dH1 = dA2 * p.at("enc.W2").transpose();
    const Matrix dA1 = dH1.cwiseProduct(relu_mask(c.A1));
    grads.at("enc.W1") += X.transpose() * dA1;
    grads.at("enc.b1") += dA1.colwise().sum();
}

struct DecCache {
    Matrix B1, G1, B2, G2, LOGITS, SIG, P;
};

DecCache dec_forward(const ParamSet& p, const Eigen::Ref<const Matrix>& Z) {
    DecCache c;
    c.B1 = Z * p.at("dec.W1");
    c.B1.rowwise() += p.at("dec.b1").row(0);
    c.G1 = relu(c.B1);
    c.B2 = c.G1 * p.at("dec.W2");
    c.B2.rowwise() += p.at("dec.b2").row(0);
    c.G2 = relu(c.B2);
    c.LOGITS = c.G2 * p.at("dec.Wout");
    c.LOGITS.rowwise() += p.at("dec.bout").row(0);
    c.SIG = sigmoid(c.LOGITS);
    c.P = c.SIG.cwiseMax(kProbClampLo).cwiseMin(kProbClampHi);
    return c;
}

// Returns dZ from the decoder path.
Matrix dec_backward(const ParamSet& p, const Eigen::Ref<const Matrix>& Z, const DecCache& c,
                    const Matrix& dLOGITS, ParamSet& grads) {
    grads.at("dec.Wout") += c.G2.transpose() * dLOGITS;
    grads.at("dec.bout") += dLOGITS.colwise().sum();
    const Matrix dG2 = dLOGITS * p.at("dec.Wout").transpose();
    const Matrix dB2 = dG2.cwiseProduct(relu_mask(c.B2));
    grads.at("dec.W2") += c.G1.transpose() * dB2;
    grads.at("dec.b2") += dB2.colwise().sum();
    const Matrix dG1 = dB2 * p.at("dec.W2").transpose();
    const Matrix dB1 = dG1.cwiseProduct(relu_mask(c.B1));
    grads.at("dec.W1") += Z.transpose() * dB1;
    grads.at("dec.b1") += dB1.colwise().sum();
    return dB1 * p.at("dec.W1").transpose();
}

void check_finite(Scalar v, const char* term) {
    if (!std::isfinite(v)) {
        throw NumericError(std::string("forward_backward: non-finite ") + term + " loss");
    }
}

}  // namespace

DiagGaussian EncoderOutput::posterior(Index row) const {
    return {mu.row(row).transpose(), var.row(row).transpose()};
}

std::vector<DiagGaussian> EncoderOutput::posteriors() const {
    std::vector<DiagGaussian> out;
    out.reserve(static_cast<std::size_t>(mu.rows()));
    for (Index i = 0; i < mu.rows(); ++i) out.push_back(posterior(i));
    return out;
}

IsoGaussian HubPriorBatch::component(Index j) const {
    return {means.row(j).transpose(), var};
}

EncoderOutput encode(const ParamSet& params, const Eigen::Ref<const Matrix>& x_batch,
                     const Eigen::Ref<const Matrix>& noise) {
    const EncCache c = enc_forward(params, x_batch);
    if (!c.MU.allFinite() || !c.VAR.allFinite()) {
        throw NumericError("encode: non-finite encoder activations");
    }
    EncoderOutput out;
    out.mu = c.MU;
    out.var = c.VAR;
    out.eps = noise;
    out.z = c.MU + c.VAR.cwiseSqrt().cwiseProduct(noise);
    return out;
}

EncoderOutput encode_mean(const ParamSet& params, const Eigen::Ref<const Matrix>& x_batch) {
    const Matrix zero = Matrix::Zero(x_batch.rows(), arch_of(params).latent_dim);
    return encode(params, x_batch, zero);
}

Matrix encode_mu(const ParamSet& params, const Eigen::Ref<const Matrix>& x_batch) {
    return enc_forward(params, x_batch).MU;
}

Matrix decode(const ParamSet& params, const Eigen::Ref<const Matrix>& z_batch) {
    return dec_forward(params, z_batch).P;
}

Scalar loss_recon(const Eigen::Ref<const Matrix>& x_batch, const Eigen::Ref<const Matrix>& probs) {
    if (x_batch.rows() != probs.rows() || x_batch.cols() != probs.cols()) {
        throw DimensionError("loss_recon: batch and probability shapes differ");
    }
    Scalar total = 0.0;
    for (Index i = 0; i < x_batch.rows(); ++i) {
        total -= bernoulli_loglik(probs.row(i).transpose(), x_batch.row(i).transpose());
    }
    return total / static_cast<Scalar>(x_batch.rows());
}

Scalar loss_kl_mixture(const EncoderOutput& enc, const HubPriorBatch& prior) {
    const Index B = enc.mu.rows();
    const Index m = prior.components();
    if (m < 1) throw ParameterError("loss_kl_mixture: empty mixture");
    const Scalar log_m = std::log(static_cast<Scalar>(m));
    const Scalar inv_var = 1.0 / prior.var;
    const Scalar log_var = std::log(prior.var);
    const Scalar d = static_cast<Scalar>(enc.mu.cols());
    Scalar total = 0.0;
    Vector logr(m);
    for (Index i = 0; i < B; ++i) {
        const Scalar log_q =
            -0.5 * (d * kLog2Pi + enc.var.row(i).array().log().sum() +
                    ((enc.z.row(i) - enc.mu.row(i)).array().square() / enc.var.row(i).array()).sum());
        for (Index j = 0; j < m; ++j) {
            const Scalar quad = (enc.z.row(i) - prior.means.row(j)).squaredNorm() * inv_var;
            logr(j) = -0.5 * (d * kLog2Pi + d * log_var + quad);
        }
        total += log_q - logsumexp(logr) + log_m;
    }
    return total / static_cast<Scalar>(B);
}

Scalar loss_contrastive(const std::vector<Triplet>& triplets, const EncoderOutput& enc) {
    const Index B = enc.mu.rows();
    const Matrix sd = enc.var.cwiseSqrt();
    Scalar total = 0.0;
    for (const auto& t : triplets) {
        if (t.negatives.empty()) continue;  // L_C = 0 for this anchor
        const Scalar w_ap = wasserstein2_raw(enc.mu.row(t.anchor).transpose(), sd.row(t.anchor).transpose(),
                                             enc.mu.row(t.positive).transpose(), sd.row(t.positive).transpose());
        for (Index nidx : t.negatives) {
            const Scalar w_an = wasserstein2_raw(enc.mu.row(t.anchor).transpose(), sd.row(t.anchor).transpose(),
                                                 enc.mu.row(nidx).transpose(), sd.row(nidx).transpose());
            total += std::max(0.0, w_ap - w_an + 1.0);
        }
    }
    return total / static_cast<Scalar>(B);
}

StepResult forward_backward(const ParamSet& params, const Eigen::Ref<const Matrix>& x_batch,
                            const LossSpec& spec) {
    const Arch arch = arch_of(params);
    const Index B = x_batch.rows();
    const Index d = arch.latent_dim;
    if (x_batch.cols() != arch.input_dim) {
        throw DimensionError("forward_backward: batch width differs from encoder input dim");
    }
    if (spec.noise.rows() != B || spec.noise.cols() != d) {
        throw DimensionError("forward_backward: noise must be batch_rows x latent_dim");
    }

    const bool want_recon = spec.weight_recon != 0.0;
    const bool want_kl = spec.beta != 0.0;
    const bool want_contrastive = spec.weight_contrastive != 0.0 && !spec.triplets.empty();
    const Scalar invB = 1.0 / static_cast<Scalar>(B);

    StepResult res;
    res.grads = params.zeros_like();
    res.breakdown.beta = spec.beta;

    if (!want_recon && !want_kl && !want_contrastive) {
        res.enc = encode(params, x_batch, spec.noise);
        return res;
    }

    // ---- forward ----
    const EncCache enc = enc_forward(params, x_batch);
    if (!enc.MU.allFinite() || !enc.VAR.allFinite()) {
        throw NumericError("forward_backward: non-finite encoder activations");
    }
    const Matrix SD = enc.VAR.cwiseSqrt();
    const Matrix Z = enc.MU + SD.cwiseProduct(spec.noise);

    res.enc.mu = enc.MU;
    res.enc.var = enc.VAR;
    res.enc.z = Z;
    res.enc.eps = spec.noise;

    // gradient accumulators on the latent-side nodes
    Matrix dMU = Matrix::Zero(B, d);
    Matrix dVAR = Matrix::Zero(B, d);
    Matrix dZ = Matrix::Zero(B, d);

    // ---- reconstruction ----
    DecCache dec;
    if (want_recon) {
        dec = dec_forward(params, Z);
        Scalar raw = 0.0;
        for (Index i = 0; i < B; ++i) {
            raw -= bernoulli_loglik(dec.P.row(i).transpose(), x_batch.row(i).transpose());
        }
        raw *= invB;
        check_finite(raw, "reconstruction");
        res.breakdown.recon = spec.weight_recon * raw;

        // d/dp of -[x ln p + (1-x) ln(1-p)], zero where the clamp is active
        Matrix dP = (-x_batch.array() / dec.P.array() +
                     (1.0 - x_batch.array()) / (1.0 - dec.P.array()))
                        .matrix() *
                    (spec.weight_recon * invB);
        const Matrix unclamped = ((dec.SIG.array() > kProbClampLo) && (dec.SIG.array() < kProbClampHi))
                                     .cast<Scalar>()
                                     .matrix();
        const Matrix dLOGITS =
            dP.cwiseProduct(dec.SIG).cwiseProduct(Matrix::Ones(B, arch.input_dim) - dec.SIG)
                .cwiseProduct(unclamped);
        dZ += dec_backward(params, Z, dec, dLOGITS, res.grads);
    }

    // ---- KL ----
    EncCache hub_enc;
    bool hub_pass = false;
    Matrix dHUBMU;
    if (want_kl) {
        if (spec.baseline_gaussian) {
            // closed-form KL(q || N(0, I)) = 0.5 sum (var + mu^2 - 1 - ln var)
            Scalar raw = 0.5 * (enc.VAR.array() + enc.MU.array().square() - 1.0 -
                                enc.VAR.array().log())
                                   .sum() *
                         invB;
            check_finite(raw, "kl");
            res.breakdown.kl = raw;
            dMU += (spec.beta * invB) * enc.MU;
            dVAR.array() += (spec.beta * invB) * 0.5 * (1.0 - 1.0 / enc.VAR.array());
        } else {
            const Index m = spec.hub_inputs.rows();
            if (m < 1) throw ParameterError("forward_backward: hub mixture requested with no hubs");
            if (spec.hub_inputs.cols() != arch.input_dim) {
                throw DimensionError("forward_backward: hub input width differs from encoder input dim");
            }
            hub_pass = true;
            hub_enc = enc_forward(params, spec.hub_inputs);
            const Matrix& HUBMU = hub_enc.MU;
            dHUBMU = Matrix::Zero(m, d);
            const Scalar tau = params.tau();
            const Scalar s2 = std::exp(tau);
            const Scalar inv_s2 = 1.0 / s2;
            const Scalar log_m = std::log(static_cast<Scalar>(m));
            const Scalar dd = static_cast<Scalar>(d);
            Scalar raw = 0.0;
            Scalar dtau = 0.0;
            Vector logr(m), wsoft(m);
            for (Index i = 0; i < B; ++i) {
                const auto var_i = enc.VAR.row(i).array();
                const auto diff_i = (Z.row(i) - enc.MU.row(i)).array();
                const Scalar log_q =
                    -0.5 * (dd * kLog2Pi + var_i.log().sum() + (diff_i.square() / var_i).sum());
                for (Index j = 0; j < m; ++j) {
                    logr(j) = -0.5 * (dd * kLog2Pi + dd * tau +
                                      (Z.row(i) - HUBMU.row(j)).squaredNorm() * inv_s2);
                }
                const Scalar lse = logsumexp(logr);
                raw += log_q - lse + log_m;
                wsoft = (logr.array() - lse).exp();

                const Scalar scale = spec.beta * invB;
                // log q: direct terms plus nothing through hub params
                dZ.row(i).array() += scale * (-(diff_i / var_i));
                dMU.row(i).array() += scale * (diff_i / var_i);
                dVAR.row(i).array() +=
                    scale * (-0.5 / var_i + 0.5 * diff_i.square() / var_i.square());
                // -logsumexp_j log r_j
                for (Index j = 0; j < m; ++j) {
                    const RowVector zdiff = Z.row(i) - HUBMU.row(j);
                    dZ.row(i) += scale * wsoft(j) * inv_s2 * zdiff;
                    dHUBMU.row(j) -= scale * wsoft(j) * inv_s2 * zdiff;
                    dtau += scale * wsoft(j) * 0.5 * (dd - zdiff.squaredNorm() * inv_s2);
                }
            }
            raw *= invB;
            check_finite(raw, "kl");
            res.breakdown.kl = raw;
            res.grads.at("tau")(0, 0) += dtau;
        }
    }

    // ---- contrastive ----
    if (want_contrastive) {
        Scalar raw = 0.0;
        const Scalar scale = spec.weight_contrastive * invB;
        for (const auto& t : spec.triplets) {
            if (t.negatives.empty()) continue;
            const Index a = t.anchor, pIdx = t.positive;
            const RowVector dmu_ap = enc.MU.row(a) - enc.MU.row(pIdx);
            const RowVector dsd_ap = SD.row(a) - SD.row(pIdx);
            const Scalar w_ap = std::sqrt(dmu_ap.squaredNorm() + dsd_ap.squaredNorm());
            for (Index nIdx : t.negatives) {
                const RowVector dmu_an = enc.MU.row(a) - enc.MU.row(nIdx);
                const RowVector dsd_an = SD.row(a) - SD.row(nIdx);
                const Scalar w_an = std::sqrt(dmu_an.squaredNorm() + dsd_an.squaredNorm());
                const Scalar arg = w_ap - w_an + 1.0;
                if (arg <= 0.0) continue;
                raw += arg;
                // dW/dmu = (mu_u - mu_v)/W, dW/dvar = (sd_u - sd_v)/(2 sd_u W)
                if (w_ap > 1e-12) {
                    dMU.row(a) += scale * dmu_ap / w_ap;
                    dMU.row(pIdx) -= scale * dmu_ap / w_ap;
                    const RowVector dv = dsd_ap / w_ap;
                    dVAR.row(a).array() += scale * dv.array() / (2.0 * SD.row(a).array());
                    dVAR.row(pIdx).array() -= scale * dv.array() / (2.0 * SD.row(pIdx).array());
                }
                if (w_an > 1e-12) {
                    dMU.row(a) -= scale * dmu_an / w_an;
                    dMU.row(nIdx) += scale * dmu_an / w_an;
                    const RowVector dv = dsd_an / w_an;
                    dVAR.row(a).array() -= scale * dv.array() / (2.0 * SD.row(a).array());
                    dVAR.row(nIdx).array() += scale * dv.array() / (2.0 * SD.row(nIdx).array());
                }
            }
        }
        raw *= invB;
        check_finite(raw, "contrastive");
        res.breakdown.contrastive = spec.weight_contrastive * raw;
    }

    res.breakdown.total =
        res.breakdown.recon + res.breakdown.contrastive + spec.beta * res.breakdown.kl;
    check_finite(res.breakdown.total, "total");

    // ---- fold the sample node into the posterior parameters ----
    dMU += dZ;
    dVAR.array() += dZ.array() * spec.noise.array() / (2.0 * SD.array());

    // ---- encoder backward: batch pass, then hub pass (mean head only) ----
    enc_backward(params, x_batch, enc, dMU, dVAR, res.grads);
    if (hub_pass) {
        enc_backward(params, spec.hub_inputs, hub_enc, dHUBMU, Matrix(), res.grads);
    }
    return res;
}

LossBreakdown total_loss(const ParamSet& params, const Eigen::Ref<const Matrix>& x_batch,
                         const LossSpec& spec) {
    return forward_backward(params, x_batch, spec).breakdown;
}

Scalar validation_loss(const ParamSet& params, const Eigen::Ref<const Matrix>& x_val,
                       const Eigen::Ref<const Matrix>& pool_hub_inputs, Scalar beta, Rng& rng) {
    if (pool_hub_inputs.rows() < 1) throw ParameterError("validation_loss: empty hub pool");
    const Arch arch = arch_of(params);
    const Matrix noise = gaussian_matrix(x_val.rows(), arch.latent_dim, rng);
    const EncoderOutput enc = encode(params, x_val, noise);
    const Matrix probs = decode(params, enc.z);
    const Scalar recon = loss_recon(x_val, probs);
    HubPriorBatch prior;
    prior.means = encode_mu(params, pool_hub_inputs);
    prior.var = std::exp(params.tau());
    const Scalar kl = loss_kl_mixture(enc, prior);
    const Scalar val = recon + beta * kl;
    if (!std::isfinite(val)) throw NumericError("validation_loss: non-finite value");
    return val;
}

Generation generate(const ParamSet& params, const Eigen::Ref<const Matrix>& hub_input,
                    Index count, std::uint64_t seed) {
    if (hub_input.rows() != 1) throw DimensionError("generate: hub_input must be a single row");
    if (count < 1) throw ParameterError("generate: count must be >= 1");
    const Arch arch = arch_of(params);
    Rng rng(seed);
    const RowVector mu = encode_mu(params, hub_input).row(0);
    const Scalar sd = std::sqrt(std::exp(params.tau()));
    Matrix z = gaussian_matrix(count, arch.latent_dim, rng) * sd;
    z.rowwise() += mu;
    Generation gen;
    gen.probs = decode(params, z);
    gen.samples.resize(count, gen.probs.cols());
    std::uniform_real_distribution<Scalar> u(0.0, 1.0);
    for (Index i = 0; i < count; ++i)
        for (Index j = 0; j < gen.probs.cols(); ++j)
            gen.samples(i, j) = u(rng) < gen.probs(i, j) ? 1.0 : 0.0;
    return gen;
}

}  // namespace hubvae
