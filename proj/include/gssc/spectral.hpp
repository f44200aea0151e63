#pragma once

#include <algorithm>
#include <limits>
#include <vector>

#include "gssc/error.hpp"
#include "gssc/graph.hpp"
#include "gssc/numerics.hpp"

namespace gssc {

struct SpectralConfig {
  int restarts = 10;
  double eig_tol = 1e-8;
  RngStream rng{};
};

/// Normalized spectral clustering (symmetric Laplacian, row-normalized
/// embedding, k-means). Rows that are exactly zero in the embedding are
/// assigned to the nearest centroid after k-means on the remaining rows.
inline Labels normalized_spectral_clustering(const AffinityGraph& g, int clusters, const SpectralConfig& cfg = {}) {
  const Index n = g.size();
  if (clusters < 1) throw Error(ErrorCode::InvalidArgument, "spectral: L must be >= 1");
  if (clusters > n) throw Error(ErrorCode::InvalidArgument, "spectral: InvalidL, L exceeds N");
  if (cfg.restarts < 1) throw Error(ErrorCode::InvalidArgument, "spectral: restarts must be >= 1");
  if (clusters == 1) return Labels(static_cast<std::size_t>(n), 0);

  const Matrix lap = normalized_laplacian(g);
  const EigenPairs eig = sym_eigs_smallest(lap, clusters);
  const double scale = std::max(1.0, lap.norm());
  const Matrix resid = lap * eig.vectors - eig.vectors * eig.values.asDiagonal();
  if (resid.colwise().norm().maxCoeff() > cfg.eig_tol * scale) {
    throw Error(ErrorCode::ConvergenceFailure, "spectral: eigenpairs fail the residual check");
  }
  Matrix embed = eig.vectors;

  std::vector<Index> live;
  live.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const double norm = embed.row(i).norm();
    if (norm > 0.0) {
      embed.row(i) /= norm;
      live.push_back(i);
    }
  }

  Labels labels(static_cast<std::size_t>(n), 0);
  if (static_cast<Index>(live.size()) < clusters) {
    // Degenerate: too few informative rows; give each its own cluster.
    for (std::size_t k = 0; k < live.size(); ++k) labels[live[k]] = static_cast<int>(k);
    return labels;
  }
  Matrix pts(static_cast<Index>(live.size()), clusters);
  for (std::size_t k = 0; k < live.size(); ++k) pts.row(static_cast<Index>(k)) = embed.row(live[k]);

  const KMeansResult km = kmeans(pts, clusters, cfg.rng, KMeansConfig{cfg.restarts, 300});
  for (std::size_t k = 0; k < live.size(); ++k) labels[live[k]] = km.labels[k];

  if (static_cast<Index>(live.size()) < n) {
    for (Index i = 0; i < n; ++i) {
      if (embed.row(i).norm() > 0.0) continue;
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < clusters; ++c) {
        const double d = (embed.row(i) - km.centroids.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      labels[i] = best;
    }
  }
  return labels;
}

}  // namespace gssc
