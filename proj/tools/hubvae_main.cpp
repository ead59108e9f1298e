#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hubvae/clustering.hpp"
#include "hubvae/dataio.hpp"
#include "hubvae/errors.hpp"
#include "hubvae/model.hpp"
#include "hubvae/training.hpp"

namespace {

using namespace hubvae;

constexpr std::uint64_t kValBinarizeTag = 0xffffffffULL;
constexpr std::uint64_t kTestBinarizeTag = 0xfffffffeULL;

struct DataArgs {
    std::string csv;
    bool csv_no_labels = false;
    std::string idx_images, idx_labels, idx_test_images, idx_test_labels;

    void attach(CLI::App* cmd) {
        cmd->add_option("--data", csv, "CSV dataset (features[,label])");
        cmd->add_flag("--no-labels", csv_no_labels, "CSV has no label column");
        cmd->add_option("--idx-images", idx_images, "IDX image file (training)");
        cmd->add_option("--idx-labels", idx_labels, "IDX label file (training)");
        cmd->add_option("--idx-test-images", idx_test_images, "IDX image file (canonical test)");
        cmd->add_option("--idx-test-labels", idx_test_labels, "IDX label file (canonical test)");
    }

    Dataset load(std::uint64_t seed) const {
        if (!csv.empty()) return load_csv(csv, !csv_no_labels, seed);
        if (!idx_images.empty()) {
            if (idx_labels.empty()) throw ParameterError("--idx-labels required with --idx-images");
            if (!idx_test_images.empty()) {
                return load_idx(idx_images, idx_labels, idx_test_images, idx_test_labels, seed);
            }
            return load_idx(idx_images, idx_labels, seed);
        }
        throw ParameterError("no dataset given: use --data or --idx-images/--idx-labels");
    }
};

template <class T>
void set_from(const std::map<std::string, std::string>& kv, const std::string& key, T& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    if constexpr (std::is_same_v<T, bool>) {
        out = it->second == "true" || it->second == "1" || it->second == "yes";
    } else if constexpr (std::is_integral_v<T>) {
        out = static_cast<T>(std::stoll(it->second));
    } else if constexpr (std::is_floating_point_v<T>) {
        out = static_cast<T>(std::stod(it->second));
    } else {
        out = it->second;
    }
}

TrainConfig config_from_file(const std::string& path) {
    TrainConfig c;
    if (path.empty()) return c;
    const auto kv = load_config_file(path);
    static const std::set<std::string> known = {
        "batch_size", "mixture_components", "latent_dim", "hidden_dim", "lambda", "beta_min",
        "max_epochs", "early_stop_lookahead", "clusters", "seed", "learning_rate", "adam_beta1",
        "adam_beta2", "adam_eps", "sigma2_init", "learn_tau", "dynamic_binarization",
        "no_selection", "no_contrastive", "baseline_gaussian", "kmeans_max_iters",
        "eval_kmeans_runs", "beta_mode"};
    for (const auto& [key, value] : kv) {
        if (known.count(key) == 0) {
            throw ParameterError("config '" + path + "': unknown key '" + key + "'");
        }
    }
    set_from(kv, "batch_size", c.batch_size);
    set_from(kv, "mixture_components", c.mixture_components);
    set_from(kv, "latent_dim", c.latent_dim);
    set_from(kv, "hidden_dim", c.hidden_dim);
    set_from(kv, "lambda", c.lambda);
    set_from(kv, "beta_min", c.beta_min);
    set_from(kv, "max_epochs", c.max_epochs);
    set_from(kv, "early_stop_lookahead", c.early_stop_lookahead);
    set_from(kv, "clusters", c.clusters);
    set_from(kv, "seed", c.seed);
    set_from(kv, "learning_rate", c.learning_rate);
    set_from(kv, "adam_beta1", c.adam_beta1);
    set_from(kv, "adam_beta2", c.adam_beta2);
    set_from(kv, "adam_eps", c.adam_eps);
    set_from(kv, "sigma2_init", c.sigma2_init);
    set_from(kv, "learn_tau", c.learn_tau);
    set_from(kv, "dynamic_binarization", c.dynamic_binarization);
    set_from(kv, "no_selection", c.no_selection);
    set_from(kv, "no_contrastive", c.no_contrastive);
    set_from(kv, "baseline_gaussian", c.baseline_gaussian);
    set_from(kv, "kmeans_max_iters", c.kmeans_max_iters);
    set_from(kv, "eval_kmeans_runs", c.eval_kmeans_runs);
    std::string beta_mode;
    set_from(kv, "beta_mode", beta_mode);
    if (beta_mode == "linear") c.beta_mode = BetaMode::LinearDecay;
    return c;
}

void write_pool_json(const std::string& path, const HubPool& pool) {
    nlohmann::json j;
    j["epoch"] = pool.epoch;
    j["hubs"] = pool.hubs;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write pool file: " + path);
    out << j.dump() << "\n";
}

HubPool read_pool_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open pool file: " + path);
    nlohmann::json j;
    in >> j;
    HubPool pool;
    pool.epoch = j.at("epoch").get<Index>();
    pool.hubs = j.at("hubs").get<std::vector<Index>>();
    return pool;
}

int cmd_synth(const std::string& out_path, const SyntheticSpec& spec) {
    const Dataset ds = make_synthetic(spec);
    save_csv(out_path, ds);
    std::cout << "wrote " << ds.n() << " x " << ds.dim() << " synthetic rows to " << out_path
              << "\n";
    return 0;
}

int cmd_train(const DataArgs& data_args, TrainConfig config, const std::string& out_dir) {
    const Dataset data = data_args.load(config.seed);
    const FitResult result = fit(data, config);

    save_checkpoint(out_dir + "/model.ckpt", result.best_params);
    write_pool_json(out_dir + "/pool.json", result.best_pool);
    std::ofstream log(out_dir + "/trainlog.jsonl");
    if (!log) throw IoError("cannot write train log in " + out_dir);
    log << result.log.to_jsonl();

    std::cout << "best epoch " << result.log.best_epoch << ", validation loss "
              << result.log.best_val_loss << ", pool size " << result.best_pool.size() << "\n";
    return 0;
}

int cmd_eval(const DataArgs& data_args, const std::string& ckpt, TrainConfig config,
             const std::string& out_path) {
    const Dataset data = data_args.load(config.seed);
    if (!data.labeled()) throw ParameterError("eval requires a labeled dataset");
    const ParamSet params = load_checkpoint(ckpt);

    Matrix test_X = data.rows(data.test_idx);
    if (config.dynamic_binarization) {
        test_X = binarize(test_X, derive_seed(config.seed, streams::kBinarize, kTestBinarizeTag));
    }
    const Matrix embeddings = encode_mean(params, test_X).mu;
    const std::vector<int> truth = data.labels_at(data.test_idx);
    const Index n_test = embeddings.rows();
    const int K = config.clusters > 0 ? config.clusters : data.num_classes();

    std::vector<Scalar> vms;
    for (int run = 0; run < config.eval_kmeans_runs; ++run) {
        const auto labeling =
            kmeans(embeddings, K, derive_seed(config.seed, streams::kKmeans, 7000 + run),
                   config.kmeans_max_iters);
        vms.push_back(v_measure(labeling.labels, truth));
    }
    Scalar mean = 0.0, var = 0.0;
    for (Scalar v : vms) mean += v;
    mean /= static_cast<Scalar>(vms.size());
    for (Scalar v : vms) var += (v - mean) * (v - mean);
    var /= static_cast<Scalar>(vms.size());

    const Index k_used = std::clamp<Index>(
        static_cast<Index>(std::llround(std::sqrt(static_cast<Scalar>(n_test)))), 1, n_test - 1);
    const Scalar purity = knn_purity(embeddings, truth, k_used);

    nlohmann::json j;
    j["v_measure"] = mean;
    j["v_measure_mean"] = mean;
    j["v_measure_std"] = std::sqrt(var);
    j["v_measure_runs"] = config.eval_kmeans_runs;
    j["knn_purity"] = purity;
    j["k_used"] = k_used;
    j["seed"] = config.seed;
    j["n_test"] = n_test;
    const std::string text = j.dump();
    if (out_path.empty()) {
        std::cout << text << "\n";
    } else {
        std::ofstream out(out_path);
        if (!out) throw IoError("cannot write eval report: " + out_path);
        out << text << "\n";
    }
    return 0;
}

int cmd_hubs(const DataArgs& data_args, const std::string& ckpt, TrainConfig config, int epoch,
             const std::string& out_path) {
    const Dataset data = data_args.load(config.seed);
    const ParamSet params = load_checkpoint(ckpt);
    Matrix train_X = data.rows(data.train_idx);
    if (config.dynamic_binarization) {
        train_X = binarize(train_X,
                           derive_seed(config.seed, streams::kBinarize, static_cast<std::uint64_t>(epoch)));
    }
    const PoolResult res = build_epoch_pool(params, train_X, config, epoch);

    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw IoError("cannot write hub CSV: " + out_path);
        out = &file;
    }
    (*out) << "index,nk_zscore,good_score,bad_hubness\n";
    out->precision(17);
    for (const auto& diag : res.diagnostics) {
        const Index dataset_index = data.train_idx[static_cast<std::size_t>(diag.dataset_index)];
        (*out) << dataset_index << ',' << diag.hubness_zscore << ',' << diag.good_score << ',';
        if (data.labeled() && !diag.rknn_dataset.empty()) {
            const int hub_label = data.labels[static_cast<std::size_t>(dataset_index)];
            Index mismatch = 0;
            for (Index r : diag.rknn_dataset) {
                const Index r_dataset = data.train_idx[static_cast<std::size_t>(r)];
                if (data.labels[static_cast<std::size_t>(r_dataset)] != hub_label) mismatch++;
            }
            (*out) << 100.0 * static_cast<Scalar>(mismatch) /
                          static_cast<Scalar>(diag.rknn_dataset.size());
        }
        (*out) << '\n';
    }
    return 0;
}

int cmd_generate(const DataArgs& data_args, const std::string& ckpt, const std::string& pool_path,
                 std::uint64_t seed, Index hub_pos, Index count, const std::string& out_prefix,
                 bool pgm) {
    const Dataset data = data_args.load(seed);
    const ParamSet params = load_checkpoint(ckpt);
    const HubPool pool = read_pool_json(pool_path);
    if (hub_pos < 0 || hub_pos >= pool.size()) {
        throw ParameterError("generate: hub position " + std::to_string(hub_pos) +
                             " outside pool of size " + std::to_string(pool.size()));
    }
    const Index dataset_index = pool.hubs[static_cast<std::size_t>(hub_pos)];
    if (dataset_index < 0 || dataset_index >= data.n()) {
        throw ParameterError("generate: pool hub index outside dataset");
    }
    const Matrix hub_input = data.X.row(dataset_index);
    const Generation gen =
        generate(params, hub_input, count, derive_seed(seed, streams::kGenerate, 0));

    auto write_matrix = [](const std::string& path, const Matrix& m) {
        std::ofstream out(path);
        if (!out) throw IoError("cannot write: " + path);
        out.precision(17);
        for (Index i = 0; i < m.rows(); ++i) {
            for (Index j = 0; j < m.cols(); ++j) {
                if (j > 0) out << ',';
                out << m(i, j);
            }
            out << '\n';
        }
    };
    write_matrix(out_prefix + "_probs.csv", gen.probs);
    write_matrix(out_prefix + "_samples.csv", gen.samples);
    if (pgm) {
        Index side = 0;
        if (gen.probs.cols() == 784) side = 28;
        else if (gen.probs.cols() == 256) side = 16;
        else throw ParameterError("--pgm supports 784 (28x28) or 256 (16x16) inputs only");
        for (Index i = 0; i < gen.probs.rows(); ++i) {
            save_pgm(out_prefix + "_" + std::to_string(i) + ".pgm", gen.probs.row(i).transpose(),
                     side, side);
        }
    }
    std::cout << "wrote " << count << " generations from hub " << dataset_index << " to "
              << out_prefix << "_{probs,samples}.csv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hub-VAE: hub-regularized variational autoencoder"};
    app.require_subcommand(1);

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "write a synthetic blob dataset as CSV");
    SyntheticSpec spec;
    std::string synth_out = "synth.csv";
    synth->add_option("--out", synth_out, "output CSV path");
    synth->add_option("--clusters", spec.clusters, "number of blobs");
    synth->add_option("--dim", spec.dim, "input dimensionality");
    synth->add_option("--per-cluster", spec.per_cluster, "samples per blob");
    synth->add_option("--spread", spec.center_spread, "center scale (pre-squash)");
    synth->add_option("--std", spec.within_std, "within-blob std (pre-squash)");
    synth->add_option("--seed", spec.seed, "RNG seed");

    // shared train/eval/hubs options
    auto add_config_opts = [](CLI::App* cmd, std::string& config_path, TrainConfig& overrides,
                              std::vector<std::string>& given) {
        cmd->add_option("--config", config_path, "flat key = value config file");
        auto track = [&given](const std::string& name) {
            return [&given, name](auto) { given.push_back(name); };
        };
        cmd->add_option("--seed", overrides.seed)->each(track("seed"));
        cmd->add_option("--epochs", overrides.max_epochs)->each(track("epochs"));
        cmd->add_option("--batch-size", overrides.batch_size)->each(track("batch_size"));
        cmd->add_option("--latent-dim", overrides.latent_dim)->each(track("latent_dim"));
        cmd->add_option("--hidden-dim", overrides.hidden_dim)->each(track("hidden_dim"));
        cmd->add_option("--clusters", overrides.clusters)->each(track("clusters"));
        cmd->add_option("--mixture-components,-m", overrides.mixture_components)
            ->each(track("mixture_components"));
        cmd->add_option("--lr", overrides.learning_rate)->each(track("lr"));
        cmd->add_option("--lookahead", overrides.early_stop_lookahead)->each(track("lookahead"));
        cmd->add_flag("--dynamic-binarization", overrides.dynamic_binarization)
            ->each(track("dynamic_binarization"));
        cmd->add_flag("--no-selection", overrides.no_selection)->each(track("no_selection"));
        cmd->add_flag("--no-contrastive", overrides.no_contrastive)->each(track("no_contrastive"));
        cmd->add_flag("--baseline-gaussian", overrides.baseline_gaussian)
            ->each(track("baseline_gaussian"));
    };
    auto merge_config = [](const std::string& config_path, const TrainConfig& overrides,
                           const std::vector<std::string>& given) {
        TrainConfig c = config_from_file(config_path);
        for (const auto& key : given) {
            if (key == "seed") c.seed = overrides.seed;
            else if (key == "epochs") c.max_epochs = overrides.max_epochs;
            else if (key == "batch_size") c.batch_size = overrides.batch_size;
            else if (key == "latent_dim") c.latent_dim = overrides.latent_dim;
            else if (key == "hidden_dim") c.hidden_dim = overrides.hidden_dim;
            else if (key == "clusters") c.clusters = overrides.clusters;
            else if (key == "mixture_components") c.mixture_components = overrides.mixture_components;
            else if (key == "lr") c.learning_rate = overrides.learning_rate;
            else if (key == "lookahead") c.early_stop_lookahead = overrides.early_stop_lookahead;
            else if (key == "dynamic_binarization") c.dynamic_binarization = overrides.dynamic_binarization;
            else if (key == "no_selection") c.no_selection = overrides.no_selection;
            else if (key == "no_contrastive") c.no_contrastive = overrides.no_contrastive;
            else if (key == "baseline_gaussian") c.baseline_gaussian = overrides.baseline_gaussian;
        }
        return c;
    };

    // ---- train ----
    auto* train = app.add_subcommand("train", "fit Hub-VAE and write checkpoint + logs");
    DataArgs train_data;
    train_data.attach(train);
    std::string train_config_path, train_out = ".";
    TrainConfig train_overrides;
    std::vector<std::string> train_given;
    add_config_opts(train, train_config_path, train_overrides, train_given);
    train->add_option("--out", train_out, "output directory");

    // ---- eval ----
    auto* eval = app.add_subcommand("eval", "V-measure and kNN purity on the test split");
    DataArgs eval_data;
    eval_data.attach(eval);
    std::string eval_config_path, eval_ckpt, eval_out;
    TrainConfig eval_overrides;
    std::vector<std::string> eval_given;
    add_config_opts(eval, eval_config_path, eval_overrides, eval_given);
    eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    eval->add_option("--out", eval_out, "write the JSON report here instead of stdout");

    // ---- hubs ----
    auto* hubs = app.add_subcommand("hubs", "export per-epoch hub diagnostics as CSV");
    DataArgs hubs_data;
    hubs_data.attach(hubs);
    std::string hubs_config_path, hubs_ckpt, hubs_out;
    TrainConfig hubs_overrides;
    std::vector<std::string> hubs_given;
    int hubs_epoch = 0;
    add_config_opts(hubs, hubs_config_path, hubs_overrides, hubs_given);
    hubs->add_option("--checkpoint", hubs_ckpt, "model checkpoint")->required();
    hubs->add_option("--epoch", hubs_epoch, "epoch index for the pool RNG stream");
    hubs->add_option("--out", hubs_out, "CSV path (stdout when omitted)");

    // ---- generate ----
    auto* gen = app.add_subcommand("generate", "conditional generation from a pool hub");
    DataArgs gen_data;
    gen_data.attach(gen);
    std::string gen_ckpt, gen_pool, gen_prefix = "generated";
    std::uint64_t gen_seed = 0;
    Index gen_hub = 0, gen_count = 16;
    bool gen_pgm = false;
    gen->add_option("--checkpoint", gen_ckpt, "model checkpoint")->required();
    gen->add_option("--pool", gen_pool, "pool.json from training")->required();
    gen->add_option("--hub", gen_hub, "hub position within the pool");
    gen->add_option("--count", gen_count, "number of generations");
    gen->add_option("--seed", gen_seed, "RNG seed");
    gen->add_option("--out", gen_prefix, "output file prefix");
    gen->add_flag("--pgm", gen_pgm, "also dump PGM images (784- or 256-dim data)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(synth_out, spec);
        if (train->parsed()) {
            return cmd_train(train_data, merge_config(train_config_path, train_overrides, train_given),
                             train_out);
        }
        if (eval->parsed()) {
            return cmd_eval(eval_data, eval_ckpt,
                            merge_config(eval_config_path, eval_overrides, eval_given), eval_out);
        }
        if (hubs->parsed()) {
            return cmd_hubs(hubs_data, hubs_ckpt,
                            merge_config(hubs_config_path, hubs_overrides, hubs_given), hubs_epoch,
                            hubs_out);
        }
        if (gen->parsed()) {
            return cmd_generate(gen_data, gen_ckpt, gen_pool, gen_seed, gen_hub, gen_count,
                                gen_prefix, gen_pgm);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
