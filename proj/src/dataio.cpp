#include "hubvae/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "hubvae/errors.hpp"
#include "hubvae/rng.hpp"

namespace hubvae {

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path, std::streamoff offset) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) {
        throw FormatError("IDX file '" + path + "': truncated at offset " + std::to_string(offset));
    }
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

Matrix read_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open IDX images: " + path);
    const std::uint32_t magic = read_be32(in, path, 0);
    if (magic != kIdxImagesMagic) {
        throw FormatError("IDX file '" + path + "': bad images magic at offset 0 (got 0x" +
                          [&] { std::ostringstream s; s << std::hex << magic; return s.str(); }() + ")");
    }
    const std::uint32_t count = read_be32(in, path, 4);
    const std::uint32_t rows = read_be32(in, path, 8);
    const std::uint32_t cols = read_be32(in, path, 12);
    const std::size_t pixels = std::size_t(count) * rows * cols;
    std::vector<unsigned char> buf(pixels);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels));
    if (static_cast<std::size_t>(in.gcount()) != pixels) {
        throw FormatError("IDX file '" + path + "': truncated pixel data at offset " +
                          std::to_string(16 + in.gcount()));
    }
    Matrix X(count, static_cast<Index>(rows) * static_cast<Index>(cols));
    for (std::uint32_t i = 0; i < count; ++i) {
        for (std::uint32_t p = 0; p < rows * cols; ++p) {
            X(i, p) = static_cast<Scalar>(buf[std::size_t(i) * rows * cols + p]) / 255.0;
        }
    }
    return X;
}

std::vector<int> read_idx_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open IDX labels: " + path);
    const std::uint32_t magic = read_be32(in, path, 0);
    if (magic != kIdxLabelsMagic) {
        throw FormatError("IDX file '" + path + "': bad labels magic at offset 0");
    }
    const std::uint32_t count = read_be32(in, path, 4);
    std::vector<unsigned char> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in.gcount()) != count) {
        throw FormatError("IDX file '" + path + "': truncated label data at offset " +
                          std::to_string(8 + in.gcount()));
    }
    return std::vector<int>(buf.begin(), buf.end());
}

}  // namespace

int Dataset::num_classes() const {
    if (labels.empty()) return 0;
    return *std::max_element(labels.begin(), labels.end()) + 1;
}

Matrix Dataset::rows(const std::vector<Index>& idx) const {
    Matrix out(static_cast<Index>(idx.size()), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = X.row(idx[i]);
    return out;
}

std::vector<int> Dataset::labels_at(const std::vector<Index>& idx) const {
    std::vector<int> out;
    out.reserve(idx.size());
    for (Index i : idx) out.push_back(labels.at(static_cast<std::size_t>(i)));
    return out;
}

void assign_splits(Dataset& ds, std::uint64_t seed, Scalar train_frac, Scalar val_frac) {
    const Index n = ds.n();
    Rng rng(derive_seed(seed, streams::kSplit));
    const std::vector<Index> perm = random_permutation(n, rng);
    const Index n_train = static_cast<Index>(std::floor(train_frac * static_cast<Scalar>(n)));
    const Index n_val = static_cast<Index>(std::floor(val_frac * static_cast<Scalar>(n)));
    ds.train_idx.assign(perm.begin(), perm.begin() + n_train);
    ds.val_idx.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
    ds.test_idx.assign(perm.begin() + n_train + n_val, perm.end());
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::uint64_t split_seed) {
    Dataset ds;
    ds.name = images_path;
    ds.X = read_idx_images(images_path);
    ds.labels = read_idx_labels(labels_path);
    if (static_cast<Index>(ds.labels.size()) != ds.X.rows()) {
        throw FormatError("IDX pair '" + images_path + "': image count " +
                          std::to_string(ds.X.rows()) + " != label count " +
                          std::to_string(ds.labels.size()));
    }
    assign_splits(ds, split_seed, 0.7, 0.1);
    return ds;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& test_images_path, const std::string& test_labels_path,
                 std::uint64_t split_seed) {
    Dataset train;
    train.X = read_idx_images(images_path);
    train.labels = read_idx_labels(labels_path);
    if (static_cast<Index>(train.labels.size()) != train.X.rows()) {
        throw FormatError("IDX pair '" + images_path + "': image/label count mismatch");
    }
    Dataset test;
    test.X = read_idx_images(test_images_path);
    test.labels = read_idx_labels(test_labels_path);
    if (static_cast<Index>(test.labels.size()) != test.X.rows()) {
        throw FormatError("IDX pair '" + test_images_path + "': image/label count mismatch");
    }
    if (train.X.cols() != test.X.cols()) {
        throw FormatError("IDX pair: train and test feature widths differ");
    }
    Dataset ds;
    ds.name = images_path;
    const Index n_train_all = train.X.rows();
    ds.X.resize(n_train_all + test.X.rows(), train.X.cols());
    ds.X.topRows(n_train_all) = train.X;
    ds.X.bottomRows(test.X.rows()) = test.X;
    ds.labels = train.labels;
    ds.labels.insert(ds.labels.end(), test.labels.begin(), test.labels.end());
    // canonical test split; 10% of the training file held out for validation
    Rng rng(derive_seed(split_seed, streams::kSplit));
    const std::vector<Index> perm = random_permutation(n_train_all, rng);
    const Index n_val = n_train_all / 10;
    ds.val_idx.assign(perm.begin(), perm.begin() + n_val);
    ds.train_idx.assign(perm.begin() + n_val, perm.end());
    std::sort(ds.train_idx.begin(), ds.train_idx.end());
    std::sort(ds.val_idx.begin(), ds.val_idx.end());
    for (Index i = 0; i < test.X.rows(); ++i) ds.test_idx.push_back(n_train_all + i);
    return ds;
}

Dataset load_csv(const std::string& path, bool has_labels, std::uint64_t split_seed) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open CSV: " + path);
    std::vector<std::vector<Scalar>> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1 && line.find_first_not_of("0123456789+-.,eE \t\r") != std::string::npos) {
            continue;  // header row
        }
        std::vector<Scalar> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                const Scalar v = std::stod(cell, &used);
                while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
                if (used != cell.size()) throw std::invalid_argument(cell);
                row.push_back(v);
            } catch (const std::exception&) {
                throw FormatError("CSV '" + path + "': non-numeric cell at line " +
                                  std::to_string(line_no));
            }
        }
        if (width == 0) width = row.size();
        if (row.size() != width) {
            throw FormatError("CSV '" + path + "': ragged row at line " + std::to_string(line_no) +
                              " (expected " + std::to_string(width) + " fields, got " +
                              std::to_string(row.size()) + ")");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw FormatError("CSV '" + path + "': no data rows");
    const std::size_t n_features = has_labels ? width - 1 : width;
    if (n_features == 0) throw FormatError("CSV '" + path + "': no feature columns");

    Dataset ds;
    ds.name = path;
    ds.X.resize(static_cast<Index>(rows.size()), static_cast<Index>(n_features));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < n_features; ++j) ds.X(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
        if (has_labels) ds.labels.push_back(static_cast<int>(std::llround(rows[i][width - 1])));
    }
    // Features already inside [0, 1] load verbatim (keeps load -> save ->
    // load value-exact); anything else is min-max scaled per column, with
    // constant columns mapped to 0.
    if (ds.X.minCoeff() < 0.0 || ds.X.maxCoeff() > 1.0) {
        for (Index j = 0; j < ds.X.cols(); ++j) {
            const Scalar lo = ds.X.col(j).minCoeff();
            const Scalar hi = ds.X.col(j).maxCoeff();
            if (hi > lo) {
                ds.X.col(j) = (ds.X.col(j).array() - lo) / (hi - lo);
            } else {
                ds.X.col(j).setZero();
            }
        }
    }
    assign_splits(ds, split_seed, 0.7, 0.1);
    return ds;
}

void save_csv(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open CSV for writing: " + path);
    out.precision(17);
    for (Index i = 0; i < ds.n(); ++i) {
        for (Index j = 0; j < ds.dim(); ++j) {
            if (j > 0) out << ',';
            out << ds.X(i, j);
        }
        if (ds.labeled()) out << ',' << ds.labels[static_cast<std::size_t>(i)];
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

Dataset make_synthetic(const SyntheticSpec& spec) {
    if (spec.clusters < 1 || spec.dim < 1 || spec.per_cluster < 1) {
        throw ParameterError("make_synthetic: clusters, dim and per_cluster must be >= 1");
    }
    Rng rng(derive_seed(spec.seed, streams::kInit));
    // centers drawn from N(0, spread^2 I); redrawn while any pair sits closer
    // than 6 within-cluster stds, so a "separated" spec is separated by
    // construction (deterministic given the seed)
    Matrix centers(spec.clusters, spec.dim);
    for (int attempt = 0; attempt < 100; ++attempt) {
        centers = gaussian_matrix(spec.clusters, spec.dim, rng) * spec.center_spread;
        Scalar min_dist = std::numeric_limits<Scalar>::infinity();
        for (int a = 0; a < spec.clusters; ++a)
            for (int b = a + 1; b < spec.clusters; ++b)
                min_dist = std::min(min_dist, (centers.row(a) - centers.row(b)).norm());
        if (spec.clusters == 1 || min_dist >= 6.0 * spec.within_std ||
            spec.center_spread < 3.0 * spec.within_std) {
            break;
        }
    }
    const Index n = static_cast<Index>(spec.clusters) * spec.per_cluster;
    Dataset ds;
    ds.name = "synthetic";
    ds.X.resize(n, spec.dim);
    ds.labels.resize(static_cast<std::size_t>(n));
    Index row = 0;
    for (int c = 0; c < spec.clusters; ++c) {
        for (Index i = 0; i < spec.per_cluster; ++i, ++row) {
            const RowVector raw =
                centers.row(c) + gaussian_matrix(1, spec.dim, rng).row(0) * spec.within_std;
            ds.X.row(row) = (1.0 / (1.0 + (-raw.array()).exp())).matrix();
            ds.labels[static_cast<std::size_t>(row)] = c;
        }
    }
    assign_splits(ds, spec.seed, 0.7, 0.1);
    return ds;
}

std::map<std::string, std::string> load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t line_no = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError("config '" + path + "': expected key = value at line " +
                              std::to_string(line_no));
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            value = value.substr(1, value.size() - 2);
        }
        if (key.empty()) {
            throw FormatError("config '" + path + "': empty key at line " + std::to_string(line_no));
        }
        kv[key] = value;
    }
    return kv;
}

Matrix binarize(const Eigen::Ref<const Matrix>& X, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<Scalar> u(0.0, 1.0);
    Matrix out(X.rows(), X.cols());
    for (Index i = 0; i < X.rows(); ++i)
        for (Index j = 0; j < X.cols(); ++j) out(i, j) = u(rng) < X(i, j) ? 1.0 : 0.0;
    return out;
}

void save_pgm(const std::string& path, const Eigen::Ref<const Vector>& row, Index width,
              Index height) {
    if (width * height != row.size()) {
        throw DimensionError("save_pgm: width*height != vector length");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open PGM for writing: " + path);
    out << "P5\n" << width << " " << height << "\n255\n";
    for (Index i = 0; i < row.size(); ++i) {
        const int v = static_cast<int>(std::lround(std::clamp(row(i), 0.0, 1.0) * 255.0));
        out.put(static_cast<char>(v));
    }
}

}  // namespace hubvae
