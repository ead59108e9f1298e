#include "hubvae/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "hubvae/errors.hpp"

static_assert(std::numeric_limits<double>::is_iec559, "checkpoint format assumes IEEE-754 doubles");

namespace hubvae {

namespace {

Matrix glorot(Index rows, Index cols, Rng& rng) {
    const Scalar limit = std::sqrt(6.0 / static_cast<Scalar>(rows + cols));
    std::uniform_real_distribution<Scalar> u(-limit, limit);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = u(rng);
    return m;
}

}  // namespace

Matrix& ParamSet::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ParameterError("ParamSet: unknown tensor '" + name + "'");
    return it->second;
}

const Matrix& ParamSet::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ParameterError("ParamSet: unknown tensor '" + name + "'");
    return it->second;
}

ParamSet ParamSet::zeros_like() const {
    ParamSet z;
    for (const auto& [name, t] : tensors) z.tensors[name] = Matrix::Zero(t.rows(), t.cols());
    return z;
}

bool ParamSet::same_shape(const ParamSet& other) const {
    if (tensors.size() != other.tensors.size()) return false;
    for (const auto& [name, t] : tensors) {
        auto it = other.tensors.find(name);
        if (it == other.tensors.end()) return false;
        if (it->second.rows() != t.rows() || it->second.cols() != t.cols()) return false;
    }
    return true;
}

ParamSet init_params(const Arch& arch, std::uint64_t seed, Scalar sigma2_init) {
    if (arch.input_dim < 1 || arch.hidden_dim < 1 || arch.latent_dim < 1) {
        throw ParameterError("init_params: all architecture dims must be >= 1");
    }
    if (!(sigma2_init > 0.0)) throw ParameterError("init_params: sigma2_init must be positive");
    Rng rng(seed);
    const Index D = arch.input_dim, h = arch.hidden_dim, d = arch.latent_dim;
    ParamSet p;
    p.tensors["enc.W1"] = glorot(D, h, rng);
    p.tensors["enc.b1"] = Matrix::Zero(1, h);
    p.tensors["enc.W2"] = glorot(h, h, rng);
    p.tensors["enc.b2"] = Matrix::Zero(1, h);
    p.tensors["enc.Wmu"] = glorot(h, d, rng);
    p.tensors["enc.bmu"] = Matrix::Zero(1, d);
    p.tensors["enc.Wvar"] = glorot(h, d, rng);
    p.tensors["enc.bvar"] = Matrix::Zero(1, d);
    p.tensors["dec.W1"] = glorot(d, h, rng);
    p.tensors["dec.b1"] = Matrix::Zero(1, h);
    p.tensors["dec.W2"] = glorot(h, h, rng);
    p.tensors["dec.b2"] = Matrix::Zero(1, h);
    p.tensors["dec.Wout"] = glorot(h, D, rng);
    p.tensors["dec.bout"] = Matrix::Zero(1, D);
    p.tensors["tau"] = Matrix::Constant(1, 1, std::log(sigma2_init));
    return p;
}

Arch arch_of(const ParamSet& params) {
    Arch a;
    a.input_dim = params.at("enc.W1").rows();
    a.hidden_dim = params.at("enc.W1").cols();
    a.latent_dim = params.at("enc.Wmu").cols();
    return a;
}

AdamState init_adam(const ParamSet& params, Scalar lr, Scalar beta1, Scalar beta2, Scalar eps) {
    AdamState s;
    s.lr = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    for (const auto& [name, t] : params.tensors) {
        s.m[name] = Matrix::Zero(t.rows(), t.cols());
        s.v[name] = Matrix::Zero(t.rows(), t.cols());
    }
    return s;
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state) {
    if (!params.same_shape(grads)) throw DimensionError("adam_step: gradient shapes differ");
    state.step += 1;
    const Scalar bc1 = 1.0 - std::pow(state.beta1, static_cast<Scalar>(state.step));
    const Scalar bc2 = 1.0 - std::pow(state.beta2, static_cast<Scalar>(state.step));
    for (auto& [name, p] : params.tensors) {
        const Matrix& g_raw = grads.at(name);
        const Scalar norm = g_raw.norm();
        if (norm < 1e-12) continue;  // degenerate block: leave parameter and moments alone
        const Matrix g = g_raw / norm;
        Matrix& m = state.m[name];
        Matrix& v = state.v[name];
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
        const Matrix m_hat = m / bc1;
        const Matrix v_hat = v / bc2;
        p.array() -= state.lr * m_hat.array() / (v_hat.array().sqrt() + state.eps);
    }
}

namespace {

// Checkpoint layout (little-endian):
//   magic "HVAE"  u32 version  i64 D  i64 hidden  i64 latent  f64 tau
//   u64 tensor_count, then per tensor:
//   u64 name_len, name bytes, i64 rows, i64 cols, rows*cols f64 (row-major)

constexpr char kMagic[4] = {'H', 'V', 'A', 'E'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError("checkpoint '" + path + "': truncated at offset " +
                               std::to_string(static_cast<long long>(in.gcount())));
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamSet& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    const Arch arch = arch_of(params);
    out.write(kMagic, 4);
    write_pod(out, kVersion);
    write_pod<std::int64_t>(out, arch.input_dim);
    write_pod<std::int64_t>(out, arch.hidden_dim);
    write_pod<std::int64_t>(out, arch.latent_dim);
    write_pod<double>(out, params.tau());
    write_pod<std::uint64_t>(out, params.tensors.size());
    for (const auto& [name, t] : params.tensors) {
        write_pod<std::uint64_t>(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::int64_t>(out, t.rows());
        write_pod<std::int64_t>(out, t.cols());
        for (Index i = 0; i < t.rows(); ++i)
            for (Index j = 0; j < t.cols(); ++j) write_pod<double>(out, t(i, j));
    }
    if (!out) throw IoError("write failed for checkpoint: " + path);
}

ParamSet load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("checkpoint '" + path + "': bad magic at offset 0");
    }
    const auto version = read_pod<std::uint32_t>(in, path);
    if (version != kVersion) {
        throw FormatError("checkpoint '" + path + "': unsupported version " + std::to_string(version));
    }
    const auto D = read_pod<std::int64_t>(in, path);
    const auto hidden = read_pod<std::int64_t>(in, path);
    const auto latent = read_pod<std::int64_t>(in, path);
    const auto tau_header = read_pod<double>(in, path);
    const auto count = read_pod<std::uint64_t>(in, path);
    ParamSet p;
    for (std::uint64_t t = 0; t < count; ++t) {
        const auto name_len = read_pod<std::uint64_t>(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        if (!in) throw FormatError("checkpoint '" + path + "': truncated tensor name");
        const auto rows = read_pod<std::int64_t>(in, path);
        const auto cols = read_pod<std::int64_t>(in, path);
        Matrix m(rows, cols);
        for (std::int64_t i = 0; i < rows; ++i)
            for (std::int64_t j = 0; j < cols; ++j) m(i, j) = read_pod<double>(in, path);
        p.tensors[name] = std::move(m);
    }
    const Arch arch = arch_of(p);
    if (arch.input_dim != D || arch.hidden_dim != hidden || arch.latent_dim != latent) {
        throw FormatError("checkpoint '" + path + "': header dims disagree with tensor shapes");
    }
    if (p.tau() != tau_header) {
        throw FormatError("checkpoint '" + path + "': header tau disagrees with tensor");
    }
    return p;
}

}  // namespace hubvae
