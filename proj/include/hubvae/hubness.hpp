#pragma once

#include <functional>
#include <vector>

#include "hubvae/distributions.hpp"
#include "hubvae/types.hpp"

namespace hubvae {

// kNN graph over a pairwise distance matrix. Neighbor lists are sorted by
// ascending distance with ties broken by smaller index, so every downstream
// computation is reproducible.
struct KnnGraph {
    Index n = 0;
    Index k = 0;
    std::vector<std::vector<Index>> neighbors;
    std::vector<std::vector<Scalar>> distances;
};

struct HubRecord {
    Index index = 0;               // point id within the batch
    Index hubness = 0;             // N_k = |rknn|
    std::vector<Index> rknn;       // points counting `index` among their kNN
    Scalar good_score = 0.0;       // log-domain G; +inf sentinel = best
};

// Per-epoch pool of retained good hubs, as original-dataset indices.
struct HubPool {
    Index epoch = 0;
    std::vector<Index> hubs;  // deduplicated, sorted ascending

    bool empty() const { return hubs.empty(); }
    Index size() const { return static_cast<Index>(hubs.size()); }
};

KnnGraph build_knn_graph(const Eigen::Ref<const Matrix>& dists, Index k);

// One record per point, with hubness and reverse-kNN sets filled in.
// sum_i N_k(i) = n * k always holds.
std::vector<HubRecord> hubness_scores(const KnnGraph& g);

// Hubs: points with N_k strictly greater than mean + lambda * population std
// of the batch's hubness scores.
std::vector<HubRecord> select_hubs(const std::vector<HubRecord>& records, Scalar lambda);

// Log-domain good-hub score
//   G = logsumexp_r( loglik(x_h | z_r) / D ) - ln( sum_r W(q_r, q_h) ).
// The per-dimension normalization of the log-likelihood keeps 784-dim
// Bernoulli terms inside double range while preserving the score ordering
// within an epoch. A zero denominator (every reverse neighbor's posterior
// identical to the hub's) yields a +inf sentinel that ranks above all finite
// scores.
// decoder_loglik(hub_index, rknn_index) -> log p(x_hub | z_rknn), already
// divided by the input dimension D.
void good_hub_scores(std::vector<HubRecord>& hubs, const std::vector<DiagGaussian>& posteriors,
                     const std::function<Scalar(Index, Index)>& decoder_loglik);

// Adaptive hub threshold: z-score the good scores over the epoch's hub
// candidates and retain z > max(z)/2. Sentinel (+inf) scores are always
// retained; if the finite scores are all equal (or there is a single
// candidate) everything is retained, since an empty pool would stall
// training.
std::vector<HubRecord> filter_good_hubs(const std::vector<HubRecord>& records);

// Neighbor pruning: keep only neighbors at distance <= mu_D + 2 sigma_D
// where mu_D, sigma_D summarize the batch's k-th-neighbor distances.
// Lists may become empty.
std::vector<std::vector<Index>> adaptive_neighbors(const KnnGraph& g);

// Population mean/std helper shared by the hubness thresholds.
void mean_std_population(const std::vector<Scalar>& values, Scalar& mean, Scalar& std);

}  // namespace hubvae
