#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace cangraph {

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
    return x.cwiseMax(typename Derived::Scalar(0));
}

/// Row-wise softmax with max-shift for stability. Rows sum to 1.
template <typename Derived>
Eigen::MatrixXd softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
    Eigen::MatrixXd shifted =
        (logits.colwise() - logits.rowwise().maxCoeff()).array().exp().matrix();
    return shifted.array().colwise() / shifted.rowwise().sum().array();
}

/// Row-wise log(sum(exp(x))), max-shifted.
template <typename Derived>
Eigen::VectorXd log_sum_exp_rows(const Eigen::MatrixBase<Derived>& x) {
    Eigen::VectorXd row_max = x.rowwise().maxCoeff();
    return row_max.array() +
           (x.colwise() - row_max).array().exp().rowwise().sum().log();
}

/// Uniform double in [0, 1) built from the top 53 bits of the generator
/// output, so sequences do not depend on the standard library's
/// distribution implementations.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform double in [-limit, limit).
inline double uniform_symmetric(std::mt19937_64& rng, double limit) {
    return (2.0 * uniform01(rng) - 1.0) * limit;
}

/// Fisher-Yates with explicit draws, so shuffles reproduce across standard
/// library implementations.
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace cangraph
