#include "hubvae/hubness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hubvae/errors.hpp"

namespace hubvae {

void mean_std_population(const std::vector<Scalar>& values, Scalar& mean, Scalar& std) {
    const Scalar n = static_cast<Scalar>(values.size());
    mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    Scalar ss = 0.0;
    for (Scalar v : values) ss += (v - mean) * (v - mean);
    std = std::sqrt(ss / n);
}

KnnGraph build_knn_graph(const Eigen::Ref<const Matrix>& dists, Index k) {
    const Index n = dists.rows();
    if (dists.cols() != n) throw DimensionError("build_knn_graph: distance matrix must be square");
    if (k < 1 || k >= n) {
        throw ParameterError("build_knn_graph: need 1 <= k < n, got k=" + std::to_string(k) +
                             ", n=" + std::to_string(n));
    }
    KnnGraph g;
    g.n = n;
    g.k = k;
    g.neighbors.resize(static_cast<std::size_t>(n));
    g.distances.resize(static_cast<std::size_t>(n));
    std::vector<Index> order(static_cast<std::size_t>(n - 1));
    for (Index i = 0; i < n; ++i) {
        Index pos = 0;
        for (Index j = 0; j < n; ++j)
            if (j != i) order[static_cast<std::size_t>(pos++)] = j;
        // ascending distance, ties to the smaller index
        std::sort(order.begin(), order.end(), [&](Index a, Index b) {
            if (dists(i, a) != dists(i, b)) return dists(i, a) < dists(i, b);
            return a < b;
        });
        auto& nb = g.neighbors[static_cast<std::size_t>(i)];
        auto& nd = g.distances[static_cast<std::size_t>(i)];
        nb.assign(order.begin(), order.begin() + k);
        nd.resize(static_cast<std::size_t>(k));
        for (Index j = 0; j < k; ++j) nd[static_cast<std::size_t>(j)] = dists(i, nb[static_cast<std::size_t>(j)]);
    }
    return g;
}

std::vector<HubRecord> hubness_scores(const KnnGraph& g) {
    std::vector<HubRecord> records(static_cast<std::size_t>(g.n));
    for (Index i = 0; i < g.n; ++i) records[static_cast<std::size_t>(i)].index = i;
    for (Index j = 0; j < g.n; ++j) {
        for (Index nb : g.neighbors[static_cast<std::size_t>(j)]) {
            records[static_cast<std::size_t>(nb)].rknn.push_back(j);
        }
    }
    for (auto& r : records) r.hubness = static_cast<Index>(r.rknn.size());
    return records;
}

std::vector<HubRecord> select_hubs(const std::vector<HubRecord>& records, Scalar lambda) {
    if (records.empty()) throw ParameterError("select_hubs: empty records");
    std::vector<Scalar> scores;
    scores.reserve(records.size());
    for (const auto& r : records) scores.push_back(static_cast<Scalar>(r.hubness));
    Scalar mean, std;
    mean_std_population(scores, mean, std);
    const Scalar threshold = mean + lambda * std;
    std::vector<HubRecord> hubs;
    for (const auto& r : records) {
        if (static_cast<Scalar>(r.hubness) > threshold) hubs.push_back(r);
    }
    return hubs;
}

void good_hub_scores(std::vector<HubRecord>& hubs, const std::vector<DiagGaussian>& posteriors,
                     const std::function<Scalar(Index, Index)>& decoder_loglik) {
    for (auto& hub : hubs) {
        if (hub.rknn.empty()) throw ParameterError("good_hub_scores: hub with empty reverse-kNN set");
        const DiagGaussian& q_h = posteriors.at(static_cast<std::size_t>(hub.index));
        Vector numer(static_cast<Index>(hub.rknn.size()));
        Scalar denom = 0.0;
        for (std::size_t r = 0; r < hub.rknn.size(); ++r) {
            const Index rknn_idx = hub.rknn[r];
            numer(static_cast<Index>(r)) = decoder_loglik(hub.index, rknn_idx);
            denom += wasserstein2(posteriors.at(static_cast<std::size_t>(rknn_idx)), q_h);
        }
        if (denom == 0.0) {
            hub.good_score = std::numeric_limits<Scalar>::infinity();
        } else {
            hub.good_score = logsumexp(numer) - std::log(denom);
        }
    }
}

std::vector<HubRecord> filter_good_hubs(const std::vector<HubRecord>& records) {
    if (records.empty()) return {};
    const auto is_best_sentinel = [](const HubRecord& r) {
        return std::isinf(r.good_score) && r.good_score > 0.0;
    };
    const auto is_worst = [](const HubRecord& r) {
        return std::isinf(r.good_score) && r.good_score < 0.0;
    };
    std::vector<Scalar> finite;
    for (const auto& r : records) {
        if (std::isfinite(r.good_score)) finite.push_back(r.good_score);
    }
    // Degenerate finite sets (none, a single candidate, or all-equal scores):
    // keep everything except -inf candidates, falling back to the full set
    // when nothing else exists. An empty pool would stall training.
    Scalar mean = 0.0, std = 0.0;
    if (!finite.empty()) mean_std_population(finite, mean, std);
    if (finite.size() <= 1 || std == 0.0) {
        std::vector<HubRecord> kept;
        for (const auto& r : records) {
            if (!is_worst(r)) kept.push_back(r);
        }
        return kept.empty() ? records : kept;
    }
    Scalar max_z = -std::numeric_limits<Scalar>::infinity();
    for (Scalar s : finite) max_z = std::max(max_z, (s - mean) / std);
    const Scalar threshold = max_z / 2.0;
    std::vector<HubRecord> kept;
    for (const auto& r : records) {
        if (is_best_sentinel(r) ||
            (std::isfinite(r.good_score) && (r.good_score - mean) / std > threshold)) {
            kept.push_back(r);
        }
    }
    return kept;
}

std::vector<std::vector<Index>> adaptive_neighbors(const KnnGraph& g) {
    std::vector<Scalar> kth(static_cast<std::size_t>(g.n));
    for (Index i = 0; i < g.n; ++i) kth[static_cast<std::size_t>(i)] = g.distances[static_cast<std::size_t>(i)].back();
    Scalar mean, std;
    mean_std_population(kth, mean, std);
    const Scalar threshold = mean + 2.0 * std;
    std::vector<std::vector<Index>> pruned(static_cast<std::size_t>(g.n));
    for (Index i = 0; i < g.n; ++i) {
        const auto& nb = g.neighbors[static_cast<std::size_t>(i)];
        const auto& nd = g.distances[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < nb.size(); ++j) {
            if (nd[j] <= threshold) pruned[static_cast<std::size_t>(i)].push_back(nb[j]);
        }
    }
    return pruned;
}

}  // namespace hubvae
