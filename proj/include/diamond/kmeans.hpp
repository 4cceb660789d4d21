#ifndef DIAMOND_KMEANS_HPP
#define DIAMOND_KMEANS_HPP

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace diamond {

template <typename Scalar>
struct KMeansResult {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    Matrix centroids;             // k x dim
    std::vector<int> assignment;  // cluster of each point
    int iterations = 0;
    bool converged = false;
};

/// Index of the closest centroid (squared Euclidean); ties go to the lower index.
template <typename DerivedP, typename DerivedC>
int nearest_centroid(const Eigen::MatrixBase<DerivedP>& point,
                     const Eigen::MatrixBase<DerivedC>& centroids)
{
    int best = 0;
    auto best_d = (centroids.row(0) - point).squaredNorm();
    for (Eigen::Index c = 1; c < centroids.rows(); ++c) {
        const auto d = (centroids.row(c) - point).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

namespace detail {

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n)
{
    return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

inline double unit_double(std::mt19937_64& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

} // namespace detail

/// Lloyd's algorithm with k-means++ seeding. Rows of `points` are samples.
/// Stops when assignments no longer change or after `max_iterations`
/// updates. An emptied cluster keeps its previous centroid.
template <typename Derived>
KMeansResult<typename Derived::Scalar> kmeans(const Eigen::MatrixBase<Derived>& points, int k,
                                              std::uint64_t seed, int max_iterations = 100)
{
    using Scalar = typename Derived::Scalar;
    using Matrix = typename KMeansResult<Scalar>::Matrix;
    const Eigen::Index n = points.rows();
    if (k <= 0 || k > n)
        throw std::invalid_argument("kmeans: k must lie in [1, number of points]");

    std::mt19937_64 rng(seed);
    Matrix centroids(k, points.cols());
    centroids.row(0) = points.row(static_cast<Eigen::Index>(detail::uniform_index(rng, n)));

    std::vector<Scalar> d2(static_cast<std::size_t>(n), std::numeric_limits<Scalar>::max());
    for (int c = 1; c < k; ++c) {
        Scalar total = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const Scalar d = (points.row(i) - centroids.row(c - 1)).squaredNorm();
            if (d < d2[i])
                d2[i] = d;
            total += d2[i];
        }
        Eigen::Index chosen = n - 1;
        if (total > Scalar(0)) {
            const Scalar target = static_cast<Scalar>(detail::unit_double(rng)) * total;
            Scalar acc = 0;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc > target && d2[i] > Scalar(0)) {
                    chosen = i;
                    break;
                }
            }
        } else {
            // Every point coincides with a centroid already.
            chosen = static_cast<Eigen::Index>(detail::uniform_index(rng, n));
        }
        centroids.row(c) = points.row(chosen);
    }

    KMeansResult<Scalar> result;
    result.assignment.assign(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < max_iterations; ++iter) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            const int c = nearest_centroid(points.row(i), centroids);
            if (c != result.assignment[i]) {
                result.assignment[i] = c;
                changed = true;
            }
        }
        result.iterations = iter + 1;
        if (!changed) {
            result.converged = true;
            break;
        }
        Matrix sums = Matrix::Zero(k, points.cols());
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(result.assignment[i]) += points.row(i);
            ++counts[static_cast<std::size_t>(result.assignment[i])];
        }
        for (int c = 0; c < k; ++c)
            if (counts[static_cast<std::size_t>(c)] > 0)
                centroids.row(c) = sums.row(c) / static_cast<Scalar>(counts[static_cast<std::size_t>(c)]);
    }
    result.centroids = std::move(centroids);
    return result;
}

} // namespace diamond

#endif // DIAMOND_KMEANS_HPP
