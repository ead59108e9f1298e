#include "hubvae/types.hpp"

#include "hubvae/errors.hpp"

namespace hubvae {

Matrix matmul(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                             " vs " + std::to_string(b.rows()) + ")");
    }
    return a * b;
}

bool all_finite(const Eigen::Ref<const Matrix>& m) {
    return m.allFinite();
}

}  // namespace hubvae
