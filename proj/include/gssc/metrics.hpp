#pragma once

// Clustering error, true/false positive statistics of the self-representation,
// and l1 weight of true/false connections.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "gssc/error.hpp"
#include "gssc/graph.hpp"
#include "gssc/numerics.hpp"
#include "gssc/pursuit.hpp"

namespace gssc {

namespace detail {

// Maps arbitrary label values to 0..K-1 in ascending value order.
inline std::vector<int> compact_labels(std::span<const int> labels, int& count) {
  std::map<int, int> ids;
  for (int l : labels) ids.emplace(l, 0);
  int next = 0;
  for (auto& [value, id] : ids) id = next++;
  count = next;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(ids[l]);
  return out;
}

}  // namespace detail

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian
/// method). Returns row -> column.
inline std::vector<int> hungarian_min_cost(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw Error(ErrorCode::NonSquare, "hungarian: cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials formulation
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
  return row_to_col;
}

/// Largest total agreement over injective matchings between predicted and
/// true clusters, searched exhaustively. Only for small label counts.
inline double best_matching_exhaustive(const Matrix& contingency) {
  const Index k = std::max(contingency.rows(), contingency.cols());
  Matrix sq = Matrix::Zero(k, k);
  sq.topLeftCorner(contingency.rows(), contingency.cols()) = contingency;
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    double total = 0.0;
    for (Index r = 0; r < k; ++r) total += sq(r, perm[r]);
    best = std::max(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline double best_matching_hungarian(const Matrix& contingency) {
  const Index k = std::max(contingency.rows(), contingency.cols());
  Matrix sq = Matrix::Zero(k, k);
  sq.topLeftCorner(contingency.rows(), contingency.cols()) = contingency;
  const auto assign = hungarian_min_cost(-sq);
  double total = 0.0;
  for (Index r = 0; r < k; ++r) total += sq(r, assign[r]);
  return total;
}

/// Contingency table: rows predicted cluster, columns true cluster.
inline Matrix contingency_table(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw Error(ErrorCode::LengthMismatch, "contingency: label lengths differ");
  int kp = 0, kt = 0;
  const auto p = detail::compact_labels(pred, kp);
  const auto t = detail::compact_labels(truth, kt);
  Matrix c = Matrix::Zero(kp, kt);
  for (std::size_t i = 0; i < p.size(); ++i) c(p[i], t[i]) += 1.0;
  return c;
}

/// Fraction of misclustered points under the best one-to-one label matching.
inline double clustering_error(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw Error(ErrorCode::LengthMismatch, "clustering_error: label lengths differ");
  if (pred.empty()) return 0.0;
  const Matrix c = contingency_table(pred, truth);
  const double agree = std::max(c.rows(), c.cols()) <= 8 ? best_matching_exhaustive(c) : best_matching_hungarian(c);
  return 1.0 - agree / static_cast<double>(pred.size());
}

struct SubspaceRates {
  int label = 0;
  Index points = 0;         // n_l
  double tp_count = 0.0;    // #TP_l, averaged over the points of the subspace
  double fp_count = 0.0;    // #FP_l
  double tpr_dim = std::numeric_limits<double>::quiet_NaN();  // #TP / d_l
  double fpr_dim = std::numeric_limits<double>::quiet_NaN();  // #FP / (m - d_l)
  double tpr_size = 0.0;    // #TP / n_l
  double fpr_size = 0.0;    // #FP / (N - n_l)
};

/// Per-point true positives: support entries from the point's own cluster.
inline std::vector<Index> true_positive_counts(std::span<const PursuitResult> results, std::span<const int> truth) {
  if (results.size() != truth.size()) throw Error(ErrorCode::LengthMismatch, "tp_fp_counts: results/truth length");
  std::vector<Index> tp(results.size(), 0);
  for (std::size_t j = 0; j < results.size(); ++j) {
    for (Index i : results[j].support) {
      if (i != static_cast<Index>(j) && truth[i] == truth[j]) ++tp[j];
    }
  }
  return tp;
}

/// #TP/#FP per subspace, counted on the supports of the coefficient vectors.
/// `dims` (indexed like the ascending distinct truth labels) and `ambient`
/// enable the dimension-normalized rates.
inline std::vector<SubspaceRates> tp_fp_counts(std::span<const PursuitResult> results, std::span<const int> truth,
                                               std::span<const Index> dims = {}, Index ambient = 0) {
  if (results.size() != truth.size()) throw Error(ErrorCode::LengthMismatch, "tp_fp_counts: results/truth length");
  int k = 0;
  const auto cls = detail::compact_labels(truth, k);
  if (!dims.empty() && static_cast<int>(dims.size()) != k) {
    throw Error(ErrorCode::LengthMismatch, "tp_fp_counts: one dimension per cluster required");
  }
  std::vector<SubspaceRates> out(static_cast<std::size_t>(k));
  std::vector<int> original(static_cast<std::size_t>(k));
  for (std::size_t j = 0; j < truth.size(); ++j) original[cls[j]] = truth[j];
  const auto n_total = static_cast<Index>(truth.size());
  for (std::size_t j = 0; j < results.size(); ++j) {
    auto& s = out[cls[j]];
    ++s.points;
    for (Index i : results[j].support) {
      if (i == static_cast<Index>(j)) continue;
      if (cls[i] == cls[j]) {
        s.tp_count += 1.0;
      } else {
        s.fp_count += 1.0;
      }
    }
  }
  for (int c = 0; c < k; ++c) {
    auto& s = out[c];
    s.label = original[c];
    s.tp_count /= static_cast<double>(s.points);
    s.fp_count /= static_cast<double>(s.points);
    s.tpr_size = s.tp_count / static_cast<double>(s.points);
    s.fpr_size = n_total > s.points ? s.fp_count / static_cast<double>(n_total - s.points) : 0.0;
    if (!dims.empty()) {
      s.tpr_dim = s.tp_count / static_cast<double>(dims[c]);
      s.fpr_dim = ambient > dims[c] ? s.fp_count / static_cast<double>(ambient - dims[c]) : 0.0;
    }
  }
  return out;
}

struct L1Norms {
  double tp = 0.0;
  double fp = 0.0;
};

/// Mean over points of the l1 weight on same-cluster (TP) and other-cluster
/// (FP) coefficients.
inline L1Norms l1_norms(const CoefficientMatrix& coeffs, std::span<const int> truth) {
  const Index n = coeffs.size();
  if (coeffs.b.cols() != n || static_cast<Index>(truth.size()) != n) {
    throw Error(ErrorCode::LengthMismatch, "l1_norms: shape mismatch");
  }
  L1Norms out;
  if (n == 0) return out;
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      if (i == j) continue;
      const double w = std::abs(coeffs.b(i, j));
      if (truth[i] == truth[j]) {
        out.tp += w;
      } else {
        out.fp += w;
      }
    }
  }
  out.tp /= static_cast<double>(n);
  out.fp /= static_cast<double>(n);
  return out;
}

struct MetricsReport {
  std::optional<double> ce;
  std::optional<bool> nfc;
  std::vector<SubspaceRates> subspaces;
  std::optional<L1Norms> l1;
  double mean_support = 0.0;
  double mean_iterations = 0.0;
};

/// All metrics for one clustering run. Truth-dependent fields stay empty
/// when `truth` is empty; `ce` also stays empty without predicted labels.
inline MetricsReport evaluate(std::span<const PursuitResult> results, const CoefficientMatrix& coeffs,
                              const AffinityGraph& graph, std::span<const int> pred, std::span<const int> truth,
                              std::span<const Index> dims = {}, Index ambient = 0) {
  MetricsReport rep;
  for (const auto& r : results) {
    rep.mean_support += static_cast<double>(r.support.size());
    rep.mean_iterations += static_cast<double>(r.iterations);
  }
  if (!results.empty()) {
    rep.mean_support /= static_cast<double>(results.size());
    rep.mean_iterations /= static_cast<double>(results.size());
  }
  if (truth.empty()) return rep;
  if (!pred.empty()) rep.ce = clustering_error(pred, truth);
  rep.nfc = check_nfc(graph, truth).holds;
  rep.subspaces = tp_fp_counts(results, truth, dims, ambient);
  rep.l1 = l1_norms(coeffs, truth);
  return rep;
}

}  // namespace gssc
