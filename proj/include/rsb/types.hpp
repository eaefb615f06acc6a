#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string_view>

#include "rsb/error.hpp"

namespace rsb {

// A batch of 2D points, one per row.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 2>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// All sampling goes through this generator so runs are reproducible on a
// given build.
using Rng = std::mt19937_64;

enum class Direction { forward, backward };

inline std::string_view to_string(Direction d)
{
    return d == Direction::forward ? "forward" : "backward";
}

inline Direction parse_direction(std::string_view s)
{
    if (s == "forward")
        return Direction::forward;
    if (s == "backward")
        return Direction::backward;
    throw DomainError("unknown direction '" + std::string(s) + "'");
}

inline Direction opposite(Direction d)
{
    return d == Direction::forward ? Direction::backward : Direction::forward;
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m)
{
    return m.allFinite();
}

// Fills a matrix with independent standard normal draws, row by row so the
// stream order does not depend on the storage order.
template <typename Derived>
void fill_standard_normal(Eigen::MatrixBase<Derived>& m, Rng& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            m(i, j) = normal(rng);
}

// FNV-1a over raw bytes; used to stamp frozen processes.
inline std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 1469598103934665603ULL)
{
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace rsb
