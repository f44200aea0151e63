#pragma once

// Affinity graph built from the self-representation coefficients, plus the
// structural queries used downstream (components, false connections, and the
// eigengap estimate of the cluster count).

#include <algorithm>
#include <cmath>
#include <queue>
#include <span>
#include <tuple>
#include <vector>

#include "gssc/error.hpp"
#include "gssc/numerics.hpp"
#include "gssc/pursuit.hpp"

namespace gssc {

/// B with column j holding the coefficients of point j. Zero diagonal.
struct CoefficientMatrix {
  Matrix b;
  Index size() const { return b.rows(); }
};

/// Symmetric nonnegative adjacency with zero diagonal.
struct AffinityGraph {
  Matrix a;
  Index size() const { return a.rows(); }
};

inline CoefficientMatrix coefficient_matrix(std::span<const PursuitResult> results) {
  const auto n = static_cast<Index>(results.size());
  CoefficientMatrix out{Matrix::Zero(n, n)};
  for (const auto& r : results) {
    if (r.point < 0 || r.point >= n) throw Error(ErrorCode::InvalidIndex, "coefficient_matrix: bad point index");
    for (const auto& c : r.coefficients) {
      if (c.index == r.point) throw Error(ErrorCode::NonzeroDiagonal, "coefficient_matrix: self coefficient");
      out.b(c.index, r.point) = c.value;
    }
  }
  return out;
}

/// A = |B| + |B|^T.
inline AffinityGraph build_adjacency(const CoefficientMatrix& coeffs) {
  const Matrix& b = coeffs.b;
  if (b.rows() != b.cols()) throw Error(ErrorCode::NonSquare, "build_adjacency: B is not square");
  for (Index i = 0; i < b.rows(); ++i) {
    if (b(i, i) != 0.0) throw Error(ErrorCode::NonzeroDiagonal, "build_adjacency: B has a nonzero diagonal");
  }
  const Matrix abs_b = b.cwiseAbs();
  return {abs_b + abs_b.transpose()};
}

/// Component label per node; nodes share a label iff a path of nonzero
/// edges joins them. Labels are numbered in order of first node.
inline Labels connected_components(const AffinityGraph& g) {
  const Index n = g.size();
  Labels label(static_cast<std::size_t>(n), -1);
  int next = 0;
  std::queue<Index> frontier;
  for (Index s = 0; s < n; ++s) {
    if (label[s] >= 0) continue;
    label[s] = next;
    frontier.push(s);
    while (!frontier.empty()) {
      const Index u = frontier.front();
      frontier.pop();
      for (Index v = 0; v < n; ++v) {
        if (label[v] < 0 && g.a(u, v) != 0.0) {
          label[v] = next;
          frontier.push(v);
        }
      }
    }
    ++next;
  }
  return label;
}

inline int count_components(const AffinityGraph& g) {
  const Labels l = connected_components(g);
  return l.empty() ? 0 : *std::max_element(l.begin(), l.end()) + 1;
}

struct Edge {
  Index from = 0;
  Index to = 0;
  double weight = 0.0;
};

struct NfcReport {
  bool holds = true;
  std::vector<Edge> violations;  // i < k, row-major order
};

/// No-false-connections check: every edge must join points with equal truth label.
inline NfcReport check_nfc(const AffinityGraph& g, std::span<const int> truth) {
  const Index n = g.size();
  if (static_cast<Index>(truth.size()) != n) throw Error(ErrorCode::LengthMismatch, "check_nfc: truth length != N");
  NfcReport rep;
  for (Index i = 0; i < n; ++i) {
    for (Index k = i + 1; k < n; ++k) {
      if (g.a(i, k) != 0.0 && truth[i] != truth[k]) rep.violations.push_back({i, k, g.a(i, k)});
    }
  }
  rep.holds = rep.violations.empty();
  return rep;
}

/// D^{-1/2} (D - A) D^{-1/2}. Zero-degree nodes get a zero row and column,
/// so each isolated node contributes one zero eigenvalue.
inline Matrix normalized_laplacian(const AffinityGraph& g) {
  const Index n = g.size();
  const Vector degree = g.a.rowwise().sum();
  Vector inv_sqrt(n);
  for (Index i = 0; i < n; ++i) inv_sqrt(i) = degree(i) > 0.0 ? 1.0 / std::sqrt(degree(i)) : 0.0;
  Matrix lap = -(inv_sqrt.asDiagonal() * g.a * inv_sqrt.asDiagonal());
  for (Index i = 0; i < n; ++i) lap(i, i) += degree(i) > 0.0 ? 1.0 : 0.0;
  // exact symmetry for the eigensolver
  return 0.5 * (lap + lap.transpose());
}

/// Eigengap heuristic: argmax over k in [1, max_clusters] of
/// lambda_{k+1} - lambda_k on the ascending normalized-Laplacian spectrum.
/// lambda_{N+1} is taken as 2, the upper end of that spectrum. Ties go to
/// the smallest k.
inline int estimate_num_clusters_eigengap(const AffinityGraph& g, int max_clusters) {
  if (max_clusters < 1) throw Error(ErrorCode::InvalidArgument, "eigengap: L_max must be >= 1");
  const Index n = g.size();
  if (n == 0) throw Error(ErrorCode::InvalidShape, "eigengap: empty graph");
  const Index kmax = std::min<Index>(max_clusters, n);
  const Index needed = std::min<Index>(kmax + 1, n);
  const EigenPairs eig = sym_eigs_smallest(normalized_laplacian(g), needed);
  auto lambda = [&](Index k) { return k <= n ? eig.values(k - 1) : 2.0; };  // 1-based
  int best = 1;
  double best_gap = -1.0;
  for (Index k = 1; k <= kmax; ++k) {
    const double gap = lambda(k + 1) - lambda(k);
    if (gap > best_gap) {
      best_gap = gap;
      best = static_cast<int>(k);
    }
  }
  return best;
}

inline int default_max_clusters(Index n) { return static_cast<int>(std::min<Index>(n, 20)); }

}  // namespace gssc
