#pragma once

// End-to-end subspace clustering: self-representation by OMP or MP,
// adjacency |B| + |B|^T, normalized spectral clustering.

#include <optional>
#include <vector>

#include "gssc/graph.hpp"
#include "gssc/numerics.hpp"
#include "gssc/pursuit.hpp"
#include "gssc/spectral.hpp"

namespace gssc {

struct ClusteringResult {
  std::vector<PursuitResult> representations;
  CoefficientMatrix coefficients;
  AffinityGraph graph;
  Labels labels;
  int clusters = 0;
  bool clusters_estimated = false;
};

/// Runs all three steps on the columns of `y`. When `clusters` is empty the
/// count is estimated with the eigengap heuristic over [1, min(N, 20)].
inline ClusteringResult cluster_subspaces(const Matrix& y, const PursuitConfig& pursuit, std::optional<int> clusters,
                                          const SpectralConfig& spectral = {}, unsigned threads = 1) {
  ClusteringResult out;
  out.representations = represent_all(y, pursuit, threads);
  out.coefficients = coefficient_matrix(out.representations);
  out.graph = build_adjacency(out.coefficients);
  if (clusters) {
    out.clusters = *clusters;
  } else {
    out.clusters = estimate_num_clusters_eigengap(out.graph, default_max_clusters(y.cols()));
    out.clusters_estimated = true;
  }
  out.labels = normalized_spectral_clustering(out.graph, out.clusters, spectral);
  return out;
}

}  // namespace gssc
