#include "hubvae/training.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "hubvae/errors.hpp"

namespace hubvae {

namespace {

Index hubness_k(Index batch_size) {
    const Index k = static_cast<Index>(std::llround(std::sqrt(static_cast<Scalar>(batch_size))));
    return std::clamp<Index>(k, 1, batch_size - 1);
}

Matrix pairwise_wasserstein(const Matrix& mu, const Matrix& sd) {
    const Index n = mu.rows();
    Matrix d = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
            const Scalar w = std::sqrt((mu.row(i) - mu.row(j)).squaredNorm() +
                                       (sd.row(i) - sd.row(j)).squaredNorm());
            d(i, j) = w;
            d(j, i) = w;
        }
    }
    return d;
}

// Contiguous chunks of the permutation; chunks smaller than 4 rows are
// dropped (too small for hubness statistics).
std::vector<std::vector<Index>> make_batches(const std::vector<Index>& perm, Index batch_size) {
    std::vector<std::vector<Index>> batches;
    for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(perm.size(), start + static_cast<std::size_t>(batch_size));
        if (end - start < 4) break;
        batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                             perm.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

Matrix gather_rows(const Matrix& X, const std::vector<Index>& idx) {
    Matrix out(static_cast<Index>(idx.size()), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = X.row(idx[i]);
    return out;
}

std::vector<Index> sample_hubs(const HubPool& pool, Index m, Rng& rng) {
    std::vector<Index> chosen;
    chosen.reserve(static_cast<std::size_t>(m));
    if (pool.size() >= m) {
        std::vector<Index> perm = random_permutation(pool.size(), rng);
        for (Index i = 0; i < m; ++i) chosen.push_back(pool.hubs[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
    } else {
        std::uniform_int_distribution<Index> pick(0, pool.size() - 1);
        for (Index i = 0; i < m; ++i) chosen.push_back(pool.hubs[static_cast<std::size_t>(pick(rng))]);
    }
    return chosen;
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 4) throw ParameterError("config: batch_size must be >= 4");
    if (mixture_components < 1) throw ParameterError("config: mixture_components must be >= 1");
    if (latent_dim < 1) throw ParameterError("config: latent_dim must be >= 1");
    if (hidden_dim < 1) throw ParameterError("config: hidden_dim must be >= 1");
    if (max_epochs < 1) throw ParameterError("config: max_epochs must be >= 1");
    if (early_stop_lookahead < 1 || early_stop_lookahead > max_epochs) {
        throw ParameterError("config: early_stop_lookahead must be in [1, max_epochs]");
    }
    if (clusters < 1) throw ParameterError("config: clusters (K) is required and must be >= 1");
    if (!(sigma2_init > 0.0)) throw ParameterError("config: sigma2_init must be positive");
    if (!(learning_rate > 0.0)) throw ParameterError("config: learning_rate must be positive");
}

Scalar beta_schedule(int epoch, const TrainConfig& config) {
    if (epoch < 0) throw ParameterError("beta_schedule: epoch must be >= 0");
    switch (config.beta_mode) {
        case BetaMode::Constant:
            return 1.0;
        case BetaMode::LinearDecay:
            return std::max(config.beta_min,
                            1.0 - static_cast<Scalar>(epoch) / static_cast<Scalar>(config.max_epochs));
    }
    return 1.0;
}

bool EarlyStopper::update(int epoch, Scalar value) {
    if (best_epoch < 0 || value < best_value) {
        best_epoch = epoch;
        best_value = value;
    }
    return epoch - best_epoch >= lookahead;
}

PoolResult build_epoch_pool(const ParamSet& params, const Matrix& train_X,
                            const TrainConfig& config, int epoch) {
    const Arch arch = arch_of(params);
    const Index n = train_X.rows();
    const Scalar input_dim = static_cast<Scalar>(train_X.cols());
    Rng rng(derive_seed(config.seed, streams::kPool, static_cast<std::uint64_t>(epoch)));
    const std::vector<Index> perm = random_permutation(n, rng);

    PoolResult result;
    result.pool.epoch = epoch;
    std::vector<HubRecord> epoch_candidates;  // index field holds dataset indices
    std::vector<Index> raw_indices;

    for (const auto& batch : make_batches(perm, config.batch_size)) {
        const Index bs = static_cast<Index>(batch.size());
        const Matrix Xb = gather_rows(train_X, batch);
        const Matrix noise = gaussian_matrix(bs, arch.latent_dim, rng);
        const EncoderOutput enc = encode(params, Xb, noise);
        const Matrix dists = pairwise_wasserstein(enc.mu, enc.var.cwiseSqrt());
        const KnnGraph graph = build_knn_graph(dists, hubness_k(bs));
        const std::vector<HubRecord> records = hubness_scores(graph);
        std::vector<HubRecord> hubs = select_hubs(records, config.lambda);
        if (hubs.empty()) continue;

        std::vector<Scalar> nk;
        nk.reserve(records.size());
        for (const auto& r : records) nk.push_back(static_cast<Scalar>(r.hubness));
        Scalar nk_mean, nk_std;
        mean_std_population(nk, nk_mean, nk_std);

        const Matrix probs = decode(params, enc.z);
        const std::vector<DiagGaussian> posteriors = enc.posteriors();
        good_hub_scores(hubs, posteriors, [&](Index hub_idx, Index rknn_idx) {
            return bernoulli_loglik(probs.row(rknn_idx).transpose(), Xb.row(hub_idx).transpose()) /
                   input_dim;
        });

        for (const auto& h : hubs) {
            HubCandidateDiag diag;
            diag.dataset_index = batch[static_cast<std::size_t>(h.index)];
            diag.hubness_zscore =
                nk_std > 0.0 ? (static_cast<Scalar>(h.hubness) - nk_mean) / nk_std : 0.0;
            diag.good_score = h.good_score;
            for (Index r : h.rknn) diag.rknn_dataset.push_back(batch[static_cast<std::size_t>(r)]);
            result.diagnostics.push_back(std::move(diag));

            HubRecord cand = h;
            cand.index = batch[static_cast<std::size_t>(h.index)];
            epoch_candidates.push_back(std::move(cand));
            raw_indices.push_back(batch[static_cast<std::size_t>(h.index)]);
        }
    }

    std::vector<Index> kept_indices;
    if (config.no_selection) {
        kept_indices = raw_indices;
    } else {
        for (const auto& r : filter_good_hubs(epoch_candidates)) kept_indices.push_back(r.index);
    }
    if (kept_indices.empty()) kept_indices = raw_indices;  // filter emptied the pool
    if (kept_indices.empty()) {
        // no hubs anywhere this epoch: degrade to uniform exemplars
        const std::vector<Index> fallback = random_permutation(n, rng);
        const Index take = std::min<Index>(config.mixture_components, n);
        kept_indices.assign(fallback.begin(), fallback.begin() + take);
    }

    std::set<Index> kept_set(kept_indices.begin(), kept_indices.end());
    result.pool.hubs.assign(kept_set.begin(), kept_set.end());
    for (auto& diag : result.diagnostics) diag.retained = kept_set.count(diag.dataset_index) != 0;
    return result;
}

std::vector<Triplet> select_triplets(const std::vector<int>& labels,
                                     const std::vector<std::vector<Index>>& pruned_neighbors,
                                     const KnnGraph& graph) {
    if (labels.size() != pruned_neighbors.size() ||
        static_cast<Index>(labels.size()) != graph.n) {
        throw DimensionError("select_triplets: labels, neighborhoods and graph sizes differ");
    }
    std::vector<Triplet> triplets;
    for (Index a = 0; a < graph.n; ++a) {
        const auto& pruned = pruned_neighbors[static_cast<std::size_t>(a)];
        const auto& full = graph.neighbors[static_cast<std::size_t>(a)];
        const auto& dist = graph.distances[static_cast<std::size_t>(a)];
        Triplet t;
        t.anchor = a;
        bool has_positive = false;
        Scalar far_d = -1.0;
        std::size_t cursor = 0;  // pruned lists preserve graph order
        for (Index nb : pruned) {
            while (cursor < full.size() && full[cursor] != nb) ++cursor;
            if (cursor == full.size()) {
                throw ParameterError("select_triplets: pruned neighbor not in the graph list");
            }
            const Scalar d = dist[cursor];
            if (labels[static_cast<std::size_t>(nb)] == labels[static_cast<std::size_t>(a)]) {
                if (d > far_d) {  // strict: ties keep the earlier (smaller) index
                    far_d = d;
                    t.positive = nb;
                    has_positive = true;
                }
            } else {
                t.negatives.push_back(nb);
            }
        }
        if (has_positive && !t.negatives.empty()) triplets.push_back(std::move(t));
    }
    return triplets;
}

EpochStats train_epoch(ParamSet& params, AdamState& adam, const Matrix& train_X,
                       const HubPool& pool, const TrainConfig& config, int epoch) {
    const Arch arch = arch_of(params);
    const bool baseline = config.baseline_gaussian;
    if (!baseline && pool.empty()) throw ParameterError("train_epoch: empty hub pool");

    Rng rng_shuffle(derive_seed(config.seed, streams::kShuffle, static_cast<std::uint64_t>(epoch)));
    Rng rng_noise(derive_seed(config.seed, streams::kStepNoise, static_cast<std::uint64_t>(epoch)));
    Rng rng_hubs(derive_seed(config.seed, streams::kHubSample, static_cast<std::uint64_t>(epoch)));

    const std::vector<Index> perm = random_permutation(train_X.rows(), rng_shuffle);
    const Scalar beta = beta_schedule(epoch, config);

    EpochStats stats;
    LossBreakdown sum;
    std::uint64_t step_counter = 0;
    for (const auto& batch : make_batches(perm, config.batch_size)) {
        const Index bs = static_cast<Index>(batch.size());
        const Matrix Xb = gather_rows(train_X, batch);

        LossSpec spec;
        spec.beta = beta;
        spec.weight_contrastive = config.no_contrastive || baseline ? 0.0 : 1.0;
        spec.baseline_gaussian = baseline;
        spec.noise = gaussian_matrix(bs, arch.latent_dim, rng_noise);

        if (!baseline) {
            const std::vector<Index> hub_ids = sample_hubs(pool, config.mixture_components, rng_hubs);
            spec.hub_inputs = gather_rows(train_X, hub_ids);
        }

        if (spec.weight_contrastive != 0.0) {
            // proxy labels from hub-seeded clustering on this step's encoder state
            const EncoderOutput enc = encode(params, Xb, spec.noise);
            const Matrix hub_mu = encode_mu(params, spec.hub_inputs);
            const Scalar hub_var = std::exp(params.tau());
            std::vector<IsoGaussian> hub_posts;
            hub_posts.reserve(static_cast<std::size_t>(hub_mu.rows()));
            for (Index j = 0; j < hub_mu.rows(); ++j)
                hub_posts.push_back({hub_mu.row(j).transpose(), hub_var});
            const std::vector<DiagGaussian> data_posts = enc.posteriors();
            const std::uint64_t km_seed = derive_seed(
                config.seed, streams::kKmeans,
                static_cast<std::uint64_t>(epoch) * 1000003ULL + step_counter);
            const ClusterLabeling labeling = hub_seeded_labeling(
                hub_posts, data_posts, config.clusters, km_seed, config.kmeans_max_iters);

            const Matrix dists = pairwise_wasserstein(enc.mu, enc.var.cwiseSqrt());
            const KnnGraph graph = build_knn_graph(dists, hubness_k(bs));
            const auto pruned = adaptive_neighbors(graph);
            spec.triplets = select_triplets(labeling.labels, pruned, graph);
        }

        StepResult step = forward_backward(params, Xb, spec);
        if (!config.learn_tau) step.grads.at("tau").setZero();
        adam_step(params, step.grads, adam);

        sum.recon += step.breakdown.recon;
        sum.kl += step.breakdown.kl;
        sum.contrastive += step.breakdown.contrastive;
        sum.total += step.breakdown.total;
        stats.steps += 1;
        step_counter += 1;
    }
    if (stats.steps > 0) {
        const Scalar inv = 1.0 / static_cast<Scalar>(stats.steps);
        stats.mean_loss.recon = sum.recon * inv;
        stats.mean_loss.kl = sum.kl * inv;
        stats.mean_loss.contrastive = sum.contrastive * inv;
        stats.mean_loss.total = sum.total * inv;
        stats.mean_loss.beta = beta;
    }
    return stats;
}

FitResult fit(const Dataset& data, const TrainConfig& config) {
    config.validate();
    if (data.train_idx.empty() || data.val_idx.empty()) {
        throw ParameterError("fit: train and validation splits must be nonempty");
    }
    const Matrix train_base = data.rows(data.train_idx);
    const Matrix val_base = data.rows(data.val_idx);
    const Matrix val_X =
        config.dynamic_binarization
            ? binarize(val_base, derive_seed(config.seed, streams::kBinarize, 0xffffffffULL))
            : val_base;

    Arch arch;
    arch.input_dim = data.dim();
    arch.hidden_dim = config.hidden_dim;
    arch.latent_dim = config.latent_dim;
    ParamSet params = init_params(arch, derive_seed(config.seed, streams::kInit), config.sigma2_init);
    AdamState adam = init_adam(params, config.learning_rate, config.adam_beta1, config.adam_beta2,
                               config.adam_eps);

    FitResult result;
    EarlyStopper stopper{config.early_stop_lookahead};
    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        const Matrix train_X =
            config.dynamic_binarization
                ? binarize(train_base,
                           derive_seed(config.seed, streams::kBinarize, static_cast<std::uint64_t>(epoch)))
                : train_base;

        PoolResult pool_res;
        if (!config.baseline_gaussian) {
            pool_res = build_epoch_pool(params, train_X, config, epoch);
        }
        const EpochStats stats = train_epoch(params, adam, train_X, pool_res.pool, config, epoch);

        Rng rng_val(derive_seed(config.seed, streams::kValidation, static_cast<std::uint64_t>(epoch)));
        const Scalar beta = beta_schedule(epoch, config);
        Scalar val;
        if (config.baseline_gaussian) {
            LossSpec vspec;
            vspec.beta = beta;
            vspec.weight_contrastive = 0.0;
            vspec.baseline_gaussian = true;
            vspec.noise = gaussian_matrix(val_X.rows(), arch.latent_dim, rng_val);
            val = total_loss(params, val_X, vspec).total;
        } else {
            const Matrix pool_inputs = gather_rows(train_X, pool_res.pool.hubs);
            val = validation_loss(params, val_X, pool_inputs, beta, rng_val);
        }

        const bool should_stop = stopper.update(epoch, val);
        if (stopper.best_epoch == epoch) {
            result.best_params = params;
            // persist the pool in original-dataset coordinates
            result.best_pool.epoch = epoch;
            result.best_pool.hubs.clear();
            for (Index h : pool_res.pool.hubs) {
                result.best_pool.hubs.push_back(data.train_idx[static_cast<std::size_t>(h)]);
            }
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train = stats.mean_loss;
        rec.pool_size = pool_res.pool.size();
        rec.val_loss = val;
        rec.best_epoch = stopper.best_epoch;
        result.log.epochs.push_back(rec);
        if (should_stop) break;
    }
    result.log.best_epoch = stopper.best_epoch;
    result.log.best_val_loss = stopper.best_value;
    return result;
}

std::string TrainLog::to_jsonl() const {
    std::string out;
    for (const auto& rec : epochs) {
        nlohmann::json j;
        j["epoch"] = rec.epoch;
        j["recon"] = rec.train.recon;
        j["kl"] = rec.train.kl;
        j["contrastive"] = rec.train.contrastive;
        j["beta"] = rec.train.beta;
        j["total"] = rec.train.total;
        j["pool_size"] = rec.pool_size;
        j["val_loss"] = rec.val_loss;
        j["best_epoch"] = rec.best_epoch;
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace hubvae
