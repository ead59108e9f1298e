#include "hubvae/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>

#include "hubvae/errors.hpp"

namespace hubvae {

namespace {

// k-means++ seeding: first center uniform, then proportional to squared
// distance from the nearest chosen center.
std::vector<Index> kmeanspp_centers(const Eigen::Ref<const Matrix>& points, int K, Rng& rng) {
    const Index n = points.rows();
    std::vector<Index> centers;
    centers.reserve(static_cast<std::size_t>(K));
    std::uniform_int_distribution<Index> uniform(0, n - 1);
    centers.push_back(uniform(rng));
    Vector d2 = (points.rowwise() - points.row(centers[0])).rowwise().squaredNorm();
    for (int c = 1; c < K; ++c) {
        const Scalar total = d2.sum();
        Index next = 0;
        if (total <= 0.0) {
            next = uniform(rng);  // all points coincide with chosen centers
        } else {
            std::uniform_real_distribution<Scalar> u(0.0, total);
            Scalar r = u(rng);
            Scalar acc = 0.0;
            next = n - 1;
            for (Index i = 0; i < n; ++i) {
                acc += d2(i);
                if (r <= acc) {
                    next = i;
                    break;
                }
            }
        }
        centers.push_back(next);
        d2 = d2.cwiseMin((points.rowwise() - points.row(next)).rowwise().squaredNorm());
    }
    return centers;
}

int nearest_center(const Eigen::Ref<const Matrix>& centers, const Eigen::Ref<const RowVector>& p) {
    int best = 0;
    Scalar best_d = std::numeric_limits<Scalar>::infinity();
    for (Index c = 0; c < centers.rows(); ++c) {
        const Scalar d = (centers.row(c) - p).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

Scalar entropy_from_counts(const std::map<int, Index>& counts, Scalar n) {
    Scalar h = 0.0;
    for (const auto& [label, count] : counts) {
        if (count == 0) continue;
        const Scalar p = static_cast<Scalar>(count) / n;
        h -= p * std::log(p);
    }
    return h;
}

}  // namespace

ClusterLabeling kmeans(const Eigen::Ref<const Matrix>& points, int K, std::uint64_t seed,
                       int max_iters) {
    const Index n = points.rows();
    if (K < 1) throw ParameterError("kmeans: K must be >= 1");
    if (static_cast<Index>(K) > n) throw ParameterError("kmeans: K > number of points");
    Rng rng(seed);
    const std::vector<Index> seed_rows = kmeanspp_centers(points, K, rng);
    Matrix centers(K, points.cols());
    for (int c = 0; c < K; ++c) centers.row(c) = points.row(seed_rows[static_cast<std::size_t>(c)]);

    ClusterLabeling out;
    out.K = K;
    out.labels.assign(static_cast<std::size_t>(n), 0);
    for (int iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        for (Index i = 0; i < n; ++i) {
            const int c = nearest_center(centers, points.row(i));
            if (c != out.labels[static_cast<std::size_t>(i)]) {
                out.labels[static_cast<std::size_t>(i)] = c;
                changed = true;
            }
        }
        Matrix sums = Matrix::Zero(K, points.cols());
        std::vector<Index> counts(static_cast<std::size_t>(K), 0);
        for (Index i = 0; i < n; ++i) {
            sums.row(out.labels[static_cast<std::size_t>(i)]) += points.row(i);
            counts[static_cast<std::size_t>(out.labels[static_cast<std::size_t>(i)])]++;
        }
        for (int c = 0; c < K; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                centers.row(c) = sums.row(c) / static_cast<Scalar>(counts[static_cast<std::size_t>(c)]);
            } else {
                // reseed an empty cluster to the point farthest from its center
                Index far = 0;
                Scalar far_d = -1.0;
                for (Index i = 0; i < n; ++i) {
                    const Scalar d =
                        (points.row(i) - centers.row(out.labels[static_cast<std::size_t>(i)])).squaredNorm();
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                centers.row(c) = points.row(far);
                changed = true;
            }
        }
        if (!changed && iter > 0) break;
    }
    return out;
}

Scalar kmeans_inertia(const Eigen::Ref<const Matrix>& points, const ClusterLabeling& labeling) {
    Matrix centers = Matrix::Zero(labeling.K, points.cols());
    std::vector<Index> counts(static_cast<std::size_t>(labeling.K), 0);
    for (Index i = 0; i < points.rows(); ++i) {
        centers.row(labeling.labels[static_cast<std::size_t>(i)]) += points.row(i);
        counts[static_cast<std::size_t>(labeling.labels[static_cast<std::size_t>(i)])]++;
    }
    for (int c = 0; c < labeling.K; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0) centers.row(c) /= static_cast<Scalar>(counts[static_cast<std::size_t>(c)]);
    }
    Scalar inertia = 0.0;
    for (Index i = 0; i < points.rows(); ++i) {
        inertia += (points.row(i) - centers.row(labeling.labels[static_cast<std::size_t>(i)])).squaredNorm();
    }
    return inertia;
}

ClusterLabeling hub_seeded_labeling(const std::vector<IsoGaussian>& hub_posteriors,
                                    const std::vector<DiagGaussian>& data_posteriors, int K,
                                    std::uint64_t seed, int max_iters) {
    const Index n_hubs = static_cast<Index>(hub_posteriors.size());
    const Index n = static_cast<Index>(data_posteriors.size());
    if (n == 0) throw ParameterError("hub_seeded_labeling: no data posteriors");
    if (n_hubs < static_cast<Index>(K)) {
        // not enough hubs to seed K clusters: plain k-means on posterior means
        std::cerr << "hub_seeded_labeling: " << n_hubs << " hubs < K=" << K
                  << ", falling back to k-means on data posteriors\n";
        Matrix means(n, data_posteriors[0].dim());
        for (Index i = 0; i < n; ++i) means.row(i) = data_posteriors[static_cast<std::size_t>(i)].mean;
        ClusterLabeling lab = kmeans(means, K, seed, max_iters);
        lab.used_fallback = true;
        return lab;
    }
    Matrix hub_means(n_hubs, hub_posteriors[0].dim());
    for (Index j = 0; j < n_hubs; ++j) hub_means.row(j) = hub_posteriors[static_cast<std::size_t>(j)].mean;
    const ClusterLabeling hub_lab = kmeans(hub_means, K, seed, max_iters);

    ClusterLabeling out;
    out.K = K;
    out.labels.assign(static_cast<std::size_t>(n), 0);
    out.seeds.resize(static_cast<std::size_t>(n_hubs));
    for (Index j = 0; j < n_hubs; ++j) out.seeds[static_cast<std::size_t>(j)] = j;
    for (Index i = 0; i < n; ++i) {
        Index best = 0;
        Scalar best_d = std::numeric_limits<Scalar>::infinity();
        for (Index j = 0; j < n_hubs; ++j) {
            const Scalar d = wasserstein2(data_posteriors[static_cast<std::size_t>(i)],
                                          hub_posteriors[static_cast<std::size_t>(j)]);
            if (d < best_d) {  // strict: ties stay with the lower hub index
                best_d = d;
                best = j;
            }
        }
        out.labels[static_cast<std::size_t>(i)] = hub_lab.labels[static_cast<std::size_t>(best)];
    }
    return out;
}

Scalar v_measure(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size()) throw DimensionError("v_measure: label lengths differ");
    if (pred.empty()) throw ParameterError("v_measure: empty labelings");
    const Scalar n = static_cast<Scalar>(pred.size());
    std::map<int, Index> class_counts, cluster_counts;
    std::map<std::pair<int, int>, Index> joint;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        class_counts[truth[i]]++;
        cluster_counts[pred[i]]++;
        joint[{truth[i], pred[i]}]++;
    }
    const Scalar h_class = entropy_from_counts(class_counts, n);
    const Scalar h_cluster = entropy_from_counts(cluster_counts, n);
    // H(class | cluster) and H(cluster | class) from the contingency table
    Scalar h_class_given = 0.0, h_cluster_given = 0.0;
    for (const auto& [cell, count] : joint) {
        const Scalar p_joint = static_cast<Scalar>(count) / n;
        h_class_given -= p_joint * std::log(static_cast<Scalar>(count) /
                                            static_cast<Scalar>(cluster_counts[cell.second]));
        h_cluster_given -= p_joint * std::log(static_cast<Scalar>(count) /
                                              static_cast<Scalar>(class_counts[cell.first]));
    }
    const Scalar h = h_class == 0.0 ? 1.0 : 1.0 - h_class_given / h_class;
    const Scalar c = h_cluster == 0.0 ? 1.0 : 1.0 - h_cluster_given / h_cluster;
    if (h + c == 0.0) return 0.0;
    return 2.0 * h * c / (h + c);
}

Scalar knn_purity(const Eigen::Ref<const Matrix>& embeddings, const std::vector<int>& truth,
                  Index k) {
    const Index n = embeddings.rows();
    if (static_cast<Index>(truth.size()) != n) throw DimensionError("knn_purity: label length mismatch");
    if (k < 1 || k >= n) throw ParameterError("knn_purity: need 1 <= k < n");
    std::vector<Index> order(static_cast<std::size_t>(n));
    Scalar total = 0.0;
    for (Index i = 0; i < n; ++i) {
        const Vector d2 = (embeddings.rowwise() - embeddings.row(i)).rowwise().squaredNorm();
        Index m = 0;
        for (Index j = 0; j < n; ++j)
            if (j != i) order[static_cast<std::size_t>(m++)] = j;
        std::partial_sort(order.begin(), order.begin() + k, order.begin() + (n - 1),
                          [&](Index a, Index b) {
                              if (d2(a) != d2(b)) return d2(a) < d2(b);
                              return a < b;
                          });
        Index same = 0;
        for (Index j = 0; j < k; ++j) {
            if (truth[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])] ==
                truth[static_cast<std::size_t>(i)])
                same++;
        }
        total += static_cast<Scalar>(same) / static_cast<Scalar>(k);
    }
    return 100.0 * total / static_cast<Scalar>(n);
}

}  // namespace hubvae
