#pragma once

#include <map>
#include <string>

#include "hubvae/rng.hpp"
#include "hubvae/types.hpp"

namespace hubvae {

// Encoder D -> hidden -> hidden -> (d, d), decoder d -> hidden -> hidden -> D.
struct Arch {
    Index input_dim = 0;
    Index hidden_dim = 300;
    Index latent_dim = 40;
};

// Named parameter tensors. std::map keeps iteration order deterministic,
// which adam_step and the checkpoint writer rely on.
struct ParamSet {
    std::map<std::string, Matrix> tensors;

    Matrix& at(const std::string& name);
    const Matrix& at(const std::string& name) const;
    bool has(const std::string& name) const { return tensors.count(name) != 0; }

    Scalar tau() const { return at("tau")(0, 0); }
    void set_tau(Scalar t) { at("tau")(0, 0) = t; }

    ParamSet zeros_like() const;
    bool same_shape(const ParamSet& other) const;
};

// Glorot-uniform weights, zero biases, tau = ln(sigma2_init).
ParamSet init_params(const Arch& arch, std::uint64_t seed, Scalar sigma2_init = 1.0);

// Recovers the architecture from tensor shapes.
Arch arch_of(const ParamSet& params);

struct AdamState {
    std::map<std::string, Matrix> m;  // first moments
    std::map<std::string, Matrix> v;  // second moments
    long step = 0;
    Scalar lr = 1e-3;
    Scalar beta1 = 0.9;
    Scalar beta2 = 0.999;
    Scalar eps = 1e-8;
};

AdamState init_adam(const ParamSet& params, Scalar lr = 1e-3, Scalar beta1 = 0.9,
                    Scalar beta2 = 0.999, Scalar eps = 1e-8);

// One optimizer step. Each parameter block's gradient is rescaled to unit L2
// norm first (blocks with norm < 1e-12 stay zero), then the bias-corrected
// Adam update is applied in place.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state);

// Checkpoint file: little-endian binary. Header holds the architecture dims
// and tau, then every named tensor as (name, rows, cols, row-major doubles).
// Round-trips are bit-exact for 64-bit values.
void save_checkpoint(const std::string& path, const ParamSet& params);
ParamSet load_checkpoint(const std::string& path);

}  // namespace hubvae
