#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace cdssd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Sorted, 0-based variable indices.
using IndexSet = std::vector<int>;

using Rng = std::mt19937_64;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed for an independent sub-stream, e.g. (base seed, replication, purpose).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return mix64(mix64(mix64(seed) ^ a) ^ (b * 0xD1B54A32D192ED03ULL));
}

/// Rows of `b` listed in `z`.
inline Matrix gather_rows(const Matrix& b, const IndexSet& z) {
    Matrix out(static_cast<Eigen::Index>(z.size()), b.cols());
    for (std::size_t r = 0; r < z.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = b.row(z[r]);
    return out;
}

}  // namespace cdssd
