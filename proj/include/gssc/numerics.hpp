#pragma once

// Dense linear-algebra and randomness kernels shared by every other module.
// All functions are pure: identical inputs (including the RngStream) give
// bit-identical outputs.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "gssc/error.hpp"

namespace gssc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using Labels = std::vector<int>;

inline constexpr double kRankTolerance = 1e-10;
inline constexpr double kSymmetryTolerance = 1e-10;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

}  // namespace detail

/// Identifies an independent random stream. Streams with equal (seed, stream)
/// replay the same draws regardless of which thread consumes them.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  /// Child stream keyed by `id`; children of distinct ids are independent.
  constexpr RngStream derive(std::uint64_t id) const {
    return {seed, detail::splitmix64(stream ^ detail::splitmix64(id + 0x632BE59BD9B4E019ULL))};
  }

  friend constexpr bool operator==(const RngStream&, const RngStream&) = default;
};

/// Generator bound to one RngStream.
class Rng {
 public:
  explicit Rng(RngStream s) : engine_(make_seq(s)) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  static std::mt19937_64 make_seq(RngStream s) {
    std::seed_seq seq{static_cast<std::uint32_t>(s.seed), static_cast<std::uint32_t>(s.seed >> 32),
                      static_cast<std::uint32_t>(s.stream),
                      static_cast<std::uint32_t>(s.stream >> 32)};
    return std::mt19937_64(seq);
  }

  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// argmin_x ||A x - b||_2 for A with full column rank.
inline Vector least_squares(const Matrix& a, const Vector& b) {
  if (a.rows() != b.size()) {
    throw Error(ErrorCode::InvalidShape, "least_squares: rows(A) != length(b)");
  }
  if (a.cols() > a.rows()) {
    throw Error(ErrorCode::InvalidShape, "least_squares: more columns than rows");
  }
  if (a.cols() == 0) return Vector(0);
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double largest = sv(0);
  const double smallest = sv(sv.size() - 1);
  if (!(largest > 0.0) || smallest < kRankTolerance * largest) {
    throw Error(ErrorCode::RankDeficient, "least_squares: matrix is (numerically) rank deficient");
  }
  return svd.solve(b);
}

/// m x k matrix with orthonormal columns, Haar distributed: QR of a Gaussian
/// matrix with the diagonal of R made positive.
inline Matrix random_orthonormal(Index m, Index k, Rng& rng) {
  if (k > m || m < 0 || k < 0) {
    throw Error(ErrorCode::InvalidShape, "random_orthonormal: need k <= m");
  }
  Matrix g(m, k);
  for (Index c = 0; c < k; ++c)
    for (Index r = 0; r < m; ++r) g(r, c) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(m, k);
  const Matrix& packed = qr.matrixQR();
  for (Index c = 0; c < k; ++c) {
    if (packed(c, c) < 0.0) q.col(c) = -q.col(c);
  }
  return q;
}

inline Matrix random_orthonormal(Index m, Index k, RngStream s) {
  Rng rng(s);
  return random_orthonormal(m, k, rng);
}

/// Uniform draw from the unit sphere in R^d.
inline Vector uniform_sphere(Index d, Rng& rng) {
  if (d < 1) throw Error(ErrorCode::InvalidShape, "uniform_sphere: d must be >= 1");
  Vector v(d);
  double norm = 0.0;
  do {
    for (Index i = 0; i < d; ++i) v(i) = rng.normal();
    norm = v.norm();
  } while (!(norm > 0.0));
  return v / norm;
}

struct EigenPairs {
  Vector values;   // ascending
  Matrix vectors;  // columns, orthonormal
};

/// The k smallest eigenpairs of a symmetric matrix.
inline EigenPairs sym_eigs_smallest(const Matrix& s, Index k) {
  if (s.rows() != s.cols()) throw Error(ErrorCode::NonSquare, "sym_eigs_smallest: not square");
  const Index n = s.rows();
  if (k < 1 || k > n) throw Error(ErrorCode::InvalidArgument, "sym_eigs_smallest: need 1 <= k <= n");
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance * scale) {
    throw Error(ErrorCode::NotSymmetric, "sym_eigs_smallest: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(s);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::ConvergenceFailure, "sym_eigs_smallest: eigensolver did not converge");
  }
  return {solver.eigenvalues().head(k), solver.eigenvectors().leftCols(k)};
}

/// Singular values in descending order; min(rows, cols) of them.
inline Vector singular_values(const Matrix& a) {
  if (a.size() == 0) return Vector(0);
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues();
}

struct KMeansConfig {
  int restarts = 10;
  int max_iterations = 300;
};

struct KMeansResult {
  Labels labels;
  Matrix centroids;  // L x k, rows are centroids
  double wcss = 0.0;
};

namespace detail {

inline double row_dist2(const Matrix& pts, Index i, const Matrix& cents, Index c) {
  return (pts.row(i) - cents.row(c)).squaredNorm();
}

// One Lloyd run from k-means++ seeding.
inline KMeansResult kmeans_single(const Matrix& pts, int clusters, int max_iterations, Rng& rng) {
  const Index n = pts.rows();
  const Index dim = pts.cols();
  Matrix cents(clusters, dim);

  // k-means++ seeding
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  Index first = static_cast<Index>(rng.index(static_cast<std::size_t>(n)));
  cents.row(0) = pts.row(first);
  for (int c = 1; c < clusters; ++c) {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], row_dist2(pts, i, cents, c - 1));
      total += d2[i];
    }
    Index pick = n - 1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Index>(rng.index(static_cast<std::size_t>(n)));
    }
    cents.row(c) = pts.row(pick);
  }

  Labels labels(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = row_dist2(pts, i, cents, 0);
      for (int c = 1; c < clusters; ++c) {
        const double dd = row_dist2(pts, i, cents, c);
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      if (labels[i] != best) {
        labels[i] = best;
        changed = true;
      }
    }
    if (!changed) break;

    // Repair empty clusters by moving the farthest point into them.
    std::vector<Index> counts(static_cast<std::size_t>(clusters), 0);
    for (int l : labels) ++counts[l];
    for (int c = 0; c < clusters; ++c) {
      if (counts[c] > 0) continue;
      Index far = -1;
      double far_d = -1.0;
      for (Index i = 0; i < n; ++i) {
        if (counts[labels[i]] <= 1) continue;
        const double dd = row_dist2(pts, i, cents, labels[i]);
        if (dd > far_d) {
          far_d = dd;
          far = i;
        }
      }
      if (far < 0) break;
      --counts[labels[far]];
      labels[far] = c;
      ++counts[c];
    }

    cents.setZero();
    for (Index i = 0; i < n; ++i) cents.row(labels[i]) += pts.row(i);
    for (int c = 0; c < clusters; ++c) {
      if (counts[c] > 0) cents.row(c) /= static_cast<double>(counts[c]);
    }
  }

  KMeansResult out;
  out.wcss = 0.0;
  for (Index i = 0; i < n; ++i) out.wcss += row_dist2(pts, i, cents, labels[i]);
  out.labels = std::move(labels);
  out.centroids = std::move(cents);
  return out;
}

}  // namespace detail

/// k-means on the rows of `points` with k-means++ seeding; returns the restart
/// with the lowest within-cluster sum of squares.
inline KMeansResult kmeans(const Matrix& points, int clusters, Rng& rng, KMeansConfig cfg = {}) {
  const Index n = points.rows();
  if (clusters < 1) throw Error(ErrorCode::InvalidArgument, "kmeans: L must be >= 1");
  if (n < clusters) throw Error(ErrorCode::InvalidArgument, "kmeans: fewer points than clusters");
  if (cfg.restarts < 1) throw Error(ErrorCode::InvalidArgument, "kmeans: restarts must be >= 1");
  if (clusters == 1) {
    KMeansResult out;
    out.labels.assign(static_cast<std::size_t>(n), 0);
    out.centroids = points.colwise().mean();
    out.wcss = (points.rowwise() - out.centroids.row(0)).squaredNorm();
    return out;
  }
  KMeansResult best;
  best.wcss = std::numeric_limits<double>::infinity();
  for (int r = 0; r < cfg.restarts; ++r) {
    KMeansResult run = detail::kmeans_single(points, clusters, cfg.max_iterations, rng);
    if (run.wcss < best.wcss) best = std::move(run);
  }
  return best;
}

inline KMeansResult kmeans(const Matrix& points, int clusters, RngStream s, KMeansConfig cfg = {}) {
  Rng rng(s);
  return kmeans(points, clusters, rng, cfg);
}

}  // namespace gssc
