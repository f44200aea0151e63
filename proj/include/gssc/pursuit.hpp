#pragma once

// Greedy sparse self-representation: each data point y_j is expressed in
// terms of the other columns of Y by orthogonal matching pursuit (OMP) or
// matching pursuit (MP).
//
// Stopping combines the data-independent rules (iteration budget s_max,
// target sparsity p_max) with the data-dependent rule (residual norm <= tau).
// Every run also stops when no remaining candidate has an inner product with
// the residual above zero_tol, and at iter_cap as a last resort. All rules are
// checked before the first iteration as well, so a zero budget yields an
// empty representation.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "gssc/error.hpp"
#include "gssc/numerics.hpp"

namespace gssc {

enum class Method { OMP, MP };

enum class StopReason { MaxIterations, SparsityReached, ResidualBelowTau, ZeroInnerProducts, IterCap };

constexpr std::string_view to_string(Method m) { return m == Method::OMP ? "omp" : "mp"; }

constexpr std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::MaxIterations: return "MaxIterations";
    case StopReason::SparsityReached: return "SparsityReached";
    case StopReason::ResidualBelowTau: return "ResidualBelowTau";
    case StopReason::ZeroInnerProducts: return "ZeroInnerProducts";
    case StopReason::IterCap: return "IterCap";
  }
  return "Unknown";
}

inline constexpr int kStopReasonCount = 5;

struct PursuitConfig {
  Method method = Method::OMP;
  std::optional<std::size_t> s_max;  // unset = unbounded
  std::optional<std::size_t> p_max;  // unset = unbounded
  double tau = 0.0;
  double alpha = 1.0;        // weak-selection relaxation, (0, 1]
  double zero_tol = 1e-12;   // inner products at or below this count as zero
  std::optional<std::size_t> iter_cap;  // unset = 10 * min(m, N - 1)

  /// Data-independent stopping after `s_max` iterations.
  static PursuitConfig data_independent(Method m, std::size_t s_max) {
    PursuitConfig c;
    c.method = m;
    c.s_max = s_max;
    return c;
  }
  /// Data-dependent stopping at residual norm `tau`.
  static PursuitConfig data_dependent(Method m, double tau) {
    PursuitConfig c;
    c.method = m;
    c.tau = tau;
    return c;
  }
};

struct Coefficient {
  Index index = 0;
  double value = 0.0;
  friend bool operator==(const Coefficient&, const Coefficient&) = default;
};

struct PursuitResult {
  Index point = 0;
  std::vector<Coefficient> coefficients;  // ascending index, entry `point` never present
  std::vector<Index> selection_order;
  std::vector<Index> support;  // distinct selected indices, ascending
  double residual_norm = 0.0;
  std::size_t iterations = 0;
  StopReason stop_reason = StopReason::ZeroInnerProducts;
  bool degenerate = false;  // y_j == 0
  std::string failure;      // set by represent_all when the point could not be processed

  bool ok() const { return failure.empty(); }

  Vector dense(Index n) const {
    Vector b = Vector::Zero(n);
    for (const auto& c : coefficients) b(c.index) = c.value;
    return b;
  }
};

/// State passed to an observer after every iteration.
struct IterationView {
  std::size_t iteration = 0;
  Index selected = 0;
  double inner_product = 0.0;  // <y_selected, previous residual>
  const Vector& residual;
  std::span<const Index> selection_order;
  const Vector* coefficients = nullptr;  // MP running coefficients; null for OMP
};

struct NoObserver {
  void operator()(const IterationView&) const {}
};

namespace detail {

inline constexpr double kTieTolerance = 1e-12;
inline constexpr std::size_t kGramRefresh = 32;

struct Selection {
  Index index = -1;
  double max_abs = 0.0;
};

inline double max_candidate(const Vector& corr, const std::vector<char>& excluded) {
  double best = 0.0;
  for (Index i = 0; i < corr.size(); ++i) {
    if (!excluded[i]) best = std::max(best, std::abs(corr(i)));
  }
  return best;
}

// Lowest index whose score reaches alpha * max (ties at relative 1e-12).
inline Index pick(const Vector& corr, const std::vector<char>& excluded, double max_abs, double alpha) {
  const double threshold = alpha * max_abs * (1.0 - kTieTolerance);
  for (Index i = 0; i < corr.size(); ++i) {
    if (!excluded[i] && std::abs(corr(i)) >= threshold) return i;
  }
  return -1;
}

inline void validate(const Matrix& y, Index j, const PursuitConfig& cfg, Method expected) {
  if (cfg.method != expected) throw Error(ErrorCode::InvalidArgument, "pursuit: config method mismatch");
  if (y.cols() < 2) throw Error(ErrorCode::InvalidShape, "pursuit: need N >= 2 points");
  if (j < 0 || j >= y.cols()) throw Error(ErrorCode::InvalidIndex, "pursuit: point index out of range");
  if (!(cfg.alpha > 0.0 && cfg.alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "pursuit: alpha must lie in (0, 1]");
  if (!(cfg.tau >= 0.0)) throw Error(ErrorCode::InvalidArgument, "pursuit: tau must be >= 0");
  if (!(cfg.zero_tol >= 0.0)) throw Error(ErrorCode::InvalidArgument, "pursuit: zero_tol must be >= 0");
  if (expected == Method::OMP && cfg.s_max) {
    const auto limit = static_cast<std::size_t>(std::min<Index>(y.rows(), y.cols() - 1));
    if (*cfg.s_max > limit) throw Error(ErrorCode::InvalidArgument, "pursuit: OMP s_max exceeds min(m, N-1)");
  }
}

inline std::size_t iteration_cap(const Matrix& y, const PursuitConfig& cfg) {
  if (cfg.iter_cap) return *cfg.iter_cap;
  return static_cast<std::size_t>(std::max<Index>(1, 10 * std::min<Index>(y.rows(), y.cols() - 1)));
}

inline std::optional<StopReason> check_stop(const PursuitConfig& cfg, std::size_t iterations,
                                            std::size_t support_size, double residual, double max_abs,
                                            std::size_t cap) {
  if (cfg.s_max && iterations >= *cfg.s_max) return StopReason::MaxIterations;
  if (cfg.p_max && support_size >= *cfg.p_max) return StopReason::SparsityReached;
  if (residual <= cfg.tau) return StopReason::ResidualBelowTau;
  if (max_abs <= cfg.zero_tol) return StopReason::ZeroInnerProducts;
  if (iterations >= cap) return StopReason::IterCap;
  return std::nullopt;
}

inline std::vector<Index> sorted_distinct(std::vector<Index> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

// With `gram` = Y^T Y, Y^T r is updated through W = Y^T B for the orthonormal
// basis B of the selection.
template <class Observer>
PursuitResult omp_core(const Matrix& y, Index j, const PursuitConfig& cfg, const Matrix* gram, Observer&& observe) {
  detail::validate(y, j, cfg, Method::OMP);
  const Index m = y.rows();
  const Index n = y.cols();
  const std::size_t cap = detail::iteration_cap(y, cfg);

  PursuitResult out;
  out.point = j;
  const Vector target = y.col(j);
  if (target.norm() == 0.0) {
    out.degenerate = true;
    out.stop_reason = StopReason::ZeroInnerProducts;
    return out;
  }

  std::vector<char> excluded(static_cast<std::size_t>(n), 0);
  excluded[j] = 1;
  Vector r = target;
  Matrix basis(m, std::min<Index>(m, n - 1));
  Index rank = 0;
  std::vector<Vector> r_cols;  // columns of the triangular factor, selection order
  Matrix w;
  if (gram) w.resize(n, basis.cols());
  Vector corr = y.transpose() * r;
  double max_abs = detail::max_candidate(corr, excluded);

  std::optional<StopReason> stop = detail::check_stop(cfg, 0, 0, r.norm(), max_abs, cap);
  while (!stop) {
    const Index pick = detail::pick(corr, excluded, max_abs, cfg.alpha);
    const double ip = corr(pick);
    Vector fresh = y.col(pick);
    const double col_norm = fresh.norm();
    Vector proj = Vector::Zero(rank);
    for (int pass = 0; pass < 2 && rank > 0; ++pass) {
      const Vector c = basis.leftCols(rank).transpose() * fresh;
      fresh -= basis.leftCols(rank) * c;
      proj += c;
    }
    excluded[pick] = 1;
    const double fresh_norm = fresh.norm();
    if (!(fresh_norm > kRankTolerance * col_norm) || rank == basis.cols()) {
      // Numerically inside the current span: drop the candidate and rescan.
      max_abs = detail::max_candidate(corr, excluded);
      if (max_abs <= cfg.zero_tol) stop = StopReason::ZeroInnerProducts;
      continue;
    }
    basis.col(rank) = fresh / fresh_norm;
    r_cols.push_back(Vector(rank + 1));
    r_cols.back().head(rank) = proj;
    r_cols.back()(rank) = fresh_norm;
    const double coef = basis.col(rank).dot(r);
    r -= coef * basis.col(rank);
    if (gram) w.col(rank) = (gram->col(pick) - w.leftCols(rank) * proj) / fresh_norm;
    ++rank;
    out.selection_order.push_back(pick);
    ++out.iterations;

    if (gram && out.iterations % kGramRefresh != 0) {
      corr -= coef * w.col(rank - 1);
    } else {
      corr.noalias() = y.transpose() * r;
    }
    max_abs = detail::max_candidate(corr, excluded);
    observe(IterationView{out.iterations, pick, ip, r, out.selection_order, nullptr});
    stop = detail::check_stop(cfg, out.iterations, out.selection_order.size(), r.norm(), max_abs, cap);
  }
  out.stop_reason = *stop;
  out.support = detail::sorted_distinct(out.selection_order);

  if (out.support.empty()) {
    out.residual_norm = target.norm();
    return out;
  }
  // Y_S = B R with R upper triangular, so the least-squares coefficients are
  // R^{-1} B^T y_j (in selection order).
  Matrix tri = Matrix::Zero(rank, rank);
  for (Index k = 0; k < rank; ++k) tri.col(k).head(k + 1) = r_cols[k];
  const Vector ordered = tri.triangularView<Eigen::Upper>().solve(basis.leftCols(rank).transpose() * target);
  Vector x(rank);
  for (Index k = 0; k < rank; ++k) {
    const auto at = std::lower_bound(out.support.begin(), out.support.end(), out.selection_order[k]);
    x(at - out.support.begin()) = ordered(k);
  }
  Vector fit = Vector::Zero(m);
  for (std::size_t k = 0; k < out.support.size(); ++k) fit += x(static_cast<Index>(k)) * y.col(out.support[k]);
  out.residual_norm = (target - fit).norm();
  out.coefficients.reserve(out.support.size());
  for (std::size_t k = 0; k < out.support.size(); ++k) {
    out.coefficients.push_back({out.support[k], x(static_cast<Index>(k))});
  }
  return out;
}

}  // namespace detail

/// OMP representation of column `j` of `y` in terms of the other columns.
/// The residual is updated against the orthogonalized new column each
/// iteration; coefficients are the least-squares solution on the final support,
/// obtained from the QR factors accumulated during the iterations.
template <class Observer = NoObserver>
PursuitResult omp_represent(const Matrix& y, Index j, const PursuitConfig& cfg, Observer&& observe = {}) {
  return detail::omp_core(y, j, cfg, nullptr, std::forward<Observer>(observe));
}

namespace detail {

// With `gram` = Y^T Y the correlations are updated in O(N) per iteration and
// recomputed exactly every kGramRefresh iterations.
template <class Observer>
PursuitResult mp_core(const Matrix& y, Index j, const PursuitConfig& cfg, const Matrix* gram, Observer&& observe) {
  detail::validate(y, j, cfg, Method::MP);
  const Index n = y.cols();
  const std::size_t cap = detail::iteration_cap(y, cfg);

  PursuitResult out;
  out.point = j;
  const Vector target = y.col(j);
  if (target.norm() == 0.0) {
    out.degenerate = true;
    out.stop_reason = StopReason::ZeroInnerProducts;
    return out;
  }

  const Vector norms2 = y.colwise().squaredNorm().transpose();
  std::vector<char> excluded(static_cast<std::size_t>(n), 0);
  excluded[j] = 1;
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);
  std::size_t support_size = 0;

  Vector q = target;
  Vector b = Vector::Zero(n);
  Vector corr = y.transpose() * q;
  double max_abs = detail::max_candidate(corr, excluded);

  std::optional<StopReason> stop = detail::check_stop(cfg, 0, 0, q.norm(), max_abs, cap);
  while (!stop) {
    const Index pick = detail::pick(corr, excluded, max_abs, cfg.alpha);
    const double ip = corr(pick);
    const double step = ip / norms2(pick);
    b(pick) += step;
    q -= step * y.col(pick);
    if (!chosen[pick]) {
      chosen[pick] = 1;
      ++support_size;
    }
    out.selection_order.push_back(pick);
    ++out.iterations;

    if (gram && out.iterations % kGramRefresh != 0) {
      corr -= step * gram->col(pick);
    } else {
      corr.noalias() = y.transpose() * q;
    }
    max_abs = detail::max_candidate(corr, excluded);
    observe(IterationView{out.iterations, pick, ip, q, out.selection_order, &b});
    stop = detail::check_stop(cfg, out.iterations, support_size, q.norm(), max_abs, cap);
  }
  out.stop_reason = *stop;
  out.support = detail::sorted_distinct(out.selection_order);
  out.residual_norm = q.norm();
  out.coefficients.reserve(out.support.size());
  for (Index i : out.support) out.coefficients.push_back({i, b(i)});
  return out;
}

}  // namespace detail

/// MP representation of column `j`. Columns may be selected repeatedly; the
/// residual is orthogonalized against the current selection only.
template <class Observer = NoObserver>
PursuitResult mp_represent(const Matrix& y, Index j, const PursuitConfig& cfg, Observer&& observe = {}) {
  return detail::mp_core(y, j, cfg, nullptr, std::forward<Observer>(observe));
}

inline PursuitResult represent(const Matrix& y, Index j, const PursuitConfig& cfg) {
  return cfg.method == Method::OMP ? omp_represent(y, j, cfg) : mp_represent(y, j, cfg);
}

/// Representation of every column. Per-point errors are recorded in
/// PursuitResult::failure instead of aborting the batch. Output is identical
/// for any thread count.
inline std::vector<PursuitResult> represent_all(const Matrix& y, const PursuitConfig& cfg, unsigned threads = 1) {
  const Index n = y.cols();
  if (n < 2) throw Error(ErrorCode::InvalidShape, "represent_all: need N >= 2 points");
  std::vector<PursuitResult> results(static_cast<std::size_t>(n));
  const Matrix gram = y.transpose() * y;
  auto run_one = [&](Index j) {
    try {
      results[j] = cfg.method == Method::OMP ? detail::omp_core(y, j, cfg, &gram, NoObserver{})
                                             : detail::mp_core(y, j, cfg, &gram, NoObserver{});
    } catch (const std::exception& e) {
      results[j] = PursuitResult{};
      results[j].point = j;
      results[j].failure = e.what();
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    for (Index j = 0; j < n; ++j) run_one(j);
    return results;
  }
  std::atomic<Index> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (Index j = next++; j < n; j = next++) run_one(j);
    });
  }
  pool.clear();
  return results;
}

}  // namespace gssc
