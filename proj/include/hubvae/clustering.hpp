#pragma once

#include <optional>
#include <vector>

#include "hubvae/distributions.hpp"
#include "hubvae/rng.hpp"
#include "hubvae/types.hpp"

namespace hubvae {

struct ClusterLabeling {
    std::vector<int> labels;
    int K = 0;
    std::vector<Index> seeds;    // hub indices used for seeding, if any
    bool used_fallback = false;  // fewer hubs than K: plain k-means on data
};

// Lloyd's algorithm with k-means++ initialization. Rows of `points` are
// observations. Empty clusters are reseeded to the point farthest from its
// current center.
ClusterLabeling kmeans(const Eigen::Ref<const Matrix>& points, int K, std::uint64_t seed,
                       int max_iters = 100);

Scalar kmeans_inertia(const Eigen::Ref<const Matrix>& points, const ClusterLabeling& labeling);

// Hub-seeded proxy labeling: k-means over hub means (Euclidean), then every
// data point takes the label of its 2-Wasserstein-nearest hub distribution
// (ties to the lower hub index). With fewer than K hubs, falls back to
// k-means on the data posterior means.
ClusterLabeling hub_seeded_labeling(const std::vector<IsoGaussian>& hub_posteriors,
                                    const std::vector<DiagGaussian>& data_posteriors, int K,
                                    std::uint64_t seed, int max_iters = 100);

// Harmonic mean of entropy-based homogeneity and completeness, in [0, 1].
// Conventions: H(class) = 0 -> h = 1, H(cluster) = 0 -> c = 1, h + c = 0 -> 0.
Scalar v_measure(const std::vector<int>& pred, const std::vector<int>& truth);

// Mean percentage of each point's k Euclidean nearest neighbors sharing its
// label (ties by index).
Scalar knn_purity(const Eigen::Ref<const Matrix>& embeddings, const std::vector<int>& truth,
                  Index k);

}  // namespace hubvae
