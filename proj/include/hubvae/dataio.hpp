#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hubvae/types.hpp"

namespace hubvae {

struct Dataset {
    std::string name;
    Matrix X;                       // n x D, values in [0, 1]
    std::vector<int> labels;        // empty when unlabeled
    std::vector<Index> train_idx;
    std::vector<Index> val_idx;
    std::vector<Index> test_idx;

    Index n() const { return X.rows(); }
    Index dim() const { return X.cols(); }
    bool labeled() const { return !labels.empty(); }
    int num_classes() const;

    Matrix rows(const std::vector<Index>& idx) const;
    std::vector<int> labels_at(const std::vector<Index>& idx) const;
};

struct SyntheticSpec {
    int clusters = 3;
    Index dim = 10;
    Index per_cluster = 100;
    Scalar center_spread = 8.0;   // axis scale of blob centers (pre-squash)
    Scalar within_std = 0.25;     // isotropic blob std (pre-squash)
    std::uint64_t seed = 0;
};

// IDX (MNIST-family) container. Expects magic 0x00000803 for images and
// 0x00000801 for labels, big-endian dimensions; pixels are scaled by /255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::uint64_t split_seed);
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& test_images_path, const std::string& test_labels_path,
                 std::uint64_t split_seed);

// Numeric CSV; the last column is the label when has_labels is set. Features
// already within [0, 1] load verbatim; otherwise they are min-max scaled to
// [0, 1] per column (constant columns map to 0).
Dataset load_csv(const std::string& path, bool has_labels, std::uint64_t split_seed);

void save_csv(const std::string& path, const Dataset& ds);

// K isotropic Gaussian blobs squashed to [0, 1] by the logistic function.
// Centers sit on scaled coordinate axes (spread * e_k) when K <= D, otherwise
// they are drawn from N(0, spread^2 I). Labels are blob ids; the seeded split
// is 70/10/20.
Dataset make_synthetic(const SyntheticSpec& spec);

// Seeded disjoint split covering all of 0..n-1.
void assign_splits(Dataset& ds, std::uint64_t seed, Scalar train_frac = 0.7,
                   Scalar val_frac = 0.1);

// Flat key = value config file ('#' comments, TOML-compatible scalars).
std::map<std::string, std::string> load_config_file(const std::string& path);

// Bernoulli-resample rows of X (values are probabilities) into {0, 1}.
Matrix binarize(const Eigen::Ref<const Matrix>& X, std::uint64_t seed);

void save_pgm(const std::string& path, const Eigen::Ref<const Vector>& row, Index width,
              Index height);

}  // namespace hubvae
