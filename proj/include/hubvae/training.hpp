#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hubvae/clustering.hpp"
#include "hubvae/dataio.hpp"
#include "hubvae/hubness.hpp"
#include "hubvae/model.hpp"
#include "hubvae/params.hpp"

namespace hubvae {

enum class BetaMode { Constant, LinearDecay };

struct TrainConfig {
    Index batch_size = 100;        // B
    Index mixture_components = 1000;  // m
    Index latent_dim = 40;         // d
    Index hidden_dim = 300;
    Scalar lambda = 0.5;           // hub threshold multiplier
    BetaMode beta_mode = BetaMode::Constant;
    Scalar beta_min = 0.1;         // floor of the linear-decay schedule
    int max_epochs = 100;
    int early_stop_lookahead = 50;
    int clusters = 0;              // K, required
    std::uint64_t seed = 0;

    Scalar learning_rate = 1e-3;
    Scalar adam_beta1 = 0.9;
    Scalar adam_beta2 = 0.999;
    Scalar adam_eps = 1e-8;

    Scalar sigma2_init = 1.0;      // hub prior variance at epoch 0
    bool learn_tau = true;         // when false, tau stays pinned
    bool dynamic_binarization = false;

    // Ablations.
    bool no_selection = false;     // pool = all raw hubs, no G filtering
    bool no_contrastive = false;   // L_C forced to 0
    bool baseline_gaussian = false;  // factored-Gaussian VAE, no hubs

    int kmeans_max_iters = 100;
    int eval_kmeans_runs = 10;

    void validate() const;  // throws ParameterError
};

struct EpochRecord {
    int epoch = 0;
    LossBreakdown train;   // per-epoch averages over steps
    Index pool_size = 0;
    Scalar val_loss = 0.0;
    int best_epoch = 0;    // argmin of validation loss seen so far
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    Scalar best_val_loss = 0.0;

    std::string to_jsonl() const;
};

// Minimum-validation tracker with a look-ahead window. Feed one value per
// epoch; returns true when training should stop (no improvement for
// `lookahead` consecutive epochs).
struct EarlyStopper {
    int lookahead = 50;
    int best_epoch = -1;
    Scalar best_value = 0.0;

    bool update(int epoch, Scalar value);
};

Scalar beta_schedule(int epoch, const TrainConfig& config);

// Diagnostics for one hub candidate, exported by the `hubs` CLI and used by
// the good-hub quality checks.
struct HubCandidateDiag {
    Index dataset_index = 0;
    Scalar hubness_zscore = 0.0;       // within the candidate's mini-batch
    Scalar good_score = 0.0;
    std::vector<Index> rknn_dataset;   // reverse neighbors as dataset indices
    bool retained = false;
};

struct PoolResult {
    HubPool pool;
    std::vector<HubCandidateDiag> diagnostics;
};

// Per-epoch hub pool: per mini-batch, encode with the previous epoch's model,
// take pairwise 2-Wasserstein hubness with k = round(sqrt(B)), score the hubs,
// then filter the epoch's candidates adaptively. Fallbacks keep the pool
// nonempty: raw hubs when filtering empties it, m uniform samples when there
// are no hubs at all. Pool and diagnostic indices refer to rows of train_X;
// fit() translates the persisted pool into original-dataset indices.
PoolResult build_epoch_pool(const ParamSet& params, const Matrix& train_X,
                            const TrainConfig& config, int epoch);

// Triplets from an anchor's pruned neighborhood: positive = farthest
// same-label neighbor, negatives = all mismatched-label neighbors. Anchors
// lacking either side contribute nothing.
std::vector<Triplet> select_triplets(const std::vector<int>& labels,
                                     const std::vector<std::vector<Index>>& pruned_neighbors,
                                     const KnnGraph& graph);

struct EpochStats {
    LossBreakdown mean_loss;
    Index steps = 0;
};

EpochStats train_epoch(ParamSet& params, AdamState& adam, const Matrix& train_XProbs,
                       const HubPool& pool, const TrainConfig& config, int epoch);

struct FitResult {
    ParamSet best_params;
    HubPool best_pool;
    TrainLog log;
};

// Full training loop: pool -> epoch -> validation, early stopping on the
// validation minimum. Deterministic given (config, data).
FitResult fit(const Dataset& data, const TrainConfig& config);

}  // namespace hubvae
