#pragma once

// Closed-form quantities from the performance guarantees: the clustering
// condition, the success-probability bound, the true-positive lower bound
// under residual-threshold stopping, admissible parameter ranges, and the
// phase-transition curve fits. All logarithms are natural.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "gssc/error.hpp"
#include "gssc/numerics.hpp"
#include "gssc/pursuit.hpp"

namespace gssc::theory {

struct Params {
  Index m = 0;
  std::vector<Index> counts;  // n_l
  std::vector<Index> dims;    // d_l
  double sigma = 0.0;
  double s_max = 1.0;
  double max_aff = 0.0;
  Method variant = Method::OMP;
  double c_s = 0.1;
  double c_d = 1.0 / 18.0;
  double c_m = 1.0 / 8.0;
  std::optional<double> c_rho;  // no numeric value is known; supply to check rho_min >= c_rho

  Index total_points() const {
    Index n = 0;
    for (Index c : counts) n += c;
    return n;
  }
  Index d_max() const { return dims.empty() ? 0 : *std::max_element(dims.begin(), dims.end()); }
  double rho_min() const {
    double r = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < dims.size(); ++l) {
      r = std::min(r, static_cast<double>(counts[l] - 1) / static_cast<double>(dims[l]));
    }
    return r;
  }
  void validate() const {
    if (counts.size() != dims.size() || counts.empty()) {
      throw Error(ErrorCode::InvalidArgument, "theory: counts and dims must be nonempty and of equal length");
    }
    if (!(c_s > 0.0 && c_s <= 0.1) || !(c_d > 0.0 && c_d <= 1.0 / 18.0) || !(c_m > 0.0 && c_m <= 0.125)) {
      throw Error(ErrorCode::InvalidArgument, "theory: constants outside 0<c_s<=1/10, 0<c_d<=1/18, 0<c_m<=1/8");
    }
  }
};

/// c(sigma): 10 + 13 sigma for OMP, 22 + 29 sigma for MP.
constexpr double noise_constant(Method variant, double sigma) {
  return variant == Method::OMP ? 10.0 + 13.0 * sigma : 22.0 + 29.0 * sigma;
}

struct ConditionSides {
  double lhs = 0.0;
  double rhs = 0.0;
  bool satisfied = false;
};

inline ConditionSides clustering_condition(const Params& p) {
  p.validate();
  const double n = static_cast<double>(p.total_points());
  if (n < 2.0 || p.s_max < 1.0) throw Error(ErrorCode::DomainError, "clustering_condition: need N >= 2, s_max >= 1");
  const double log_term = 3.0 * std::log(n) + std::log(p.s_max);
  if (!(log_term > 0.0)) throw Error(ErrorCode::DomainError, "clustering_condition: N^3 s_max must exceed 1");
  const double sigma = p.sigma;
  const double noise = (10.0 * sigma / std::sqrt(log_term)) *
                       (std::sqrt(static_cast<double>(p.d_max()) / static_cast<double>(p.m)) *
                            noise_constant(p.variant, sigma) +
                        std::sqrt(2.0 / p.rho_min()) * (1.0 + 1.5 * sigma));
  ConditionSides out;
  out.lhs = p.max_aff + noise;
  out.rhs = 1.0 / (8.0 * log_term);
  out.satisfied = out.lhs <= out.rhs;
  return out;
}

/// 1 - 6/N - 5 N e^{-c_m m} - 6 sum_l n_l e^{-c_d d_l}. Not clamped; values
/// <= 0 mean the guarantee is vacuous.
inline double success_probability_bound(const Params& p) {
  p.validate();
  const double n = static_cast<double>(p.total_points());
  double sum = 0.0;
  for (std::size_t l = 0; l < p.dims.size(); ++l) {
    sum += static_cast<double>(p.counts[l]) * std::exp(-p.c_d * static_cast<double>(p.dims[l]));
  }
  return 1.0 - 6.0 / n - 5.0 * n * std::exp(-p.c_m * static_cast<double>(p.m)) - 6.0 * sum;
}

struct TauRange {
  double upper = 0.0;               // 2/3 - sqrt(d_max/m) sigma, floored at 0
  double conservative_upper = 0.0;  // with sqrt(d_max/m) replaced by 1
};

inline TauRange tau_admissible_range(Index d_max, Index m, double sigma) {
  if (m < 1) throw Error(ErrorCode::DomainError, "tau_admissible_range: m must be >= 1");
  const double ratio = std::sqrt(static_cast<double>(d_max) / static_cast<double>(m));
  return {std::max(0.0, 2.0 / 3.0 - ratio * sigma), std::max(0.0, 2.0 / 3.0 - sigma)};
}

struct TpBound {
  Index bound = 0;
  bool tau_admissible = true;
};

/// Guaranteed number of same-subspace support entries under residual
/// threshold tau; 0 with tau_admissible=false outside the admissible range.
inline TpBound theorem3_tp_lower_bound(Index d, Index n, Index m, double sigma, double tau, double c_s = 0.1) {
  if (n <= 1) throw Error(ErrorCode::DomainError, "theorem3_tp_lower_bound: n_l must exceed 1");
  const double ratio = std::sqrt(static_cast<double>(d) / static_cast<double>(m));
  const double shrink = 1.0 - 1.5 * ratio * sigma;
  if (!(shrink > 0.0)) throw Error(ErrorCode::DomainError, "theorem3_tp_lower_bound: 1 - (3/2) sqrt(d/m) sigma <= 0");
  if (tau < 0.0 || tau > 2.0 / 3.0 - ratio * sigma) return {0, false};
  const double inner = 2.0 / 3.0 - tau / shrink;
  const double factor = std::min(inner * inner / 3.0, c_s);
  const double scale = static_cast<double>(d) / (std::log(static_cast<double>(n - 1)) + 1.0);
  return {static_cast<Index>(std::max(0.0, std::floor(scale * factor))), true};
}

/// Largest s in [1, d] with s <= c_s d / log((n-1) e / s); 0 if none.
inline Index admissible_smax(Index d, Index n, double c_s = 0.1) {
  if (n < 2) throw Error(ErrorCode::DomainError, "admissible_smax: n_l must be >= 2");
  Index best = 0;
  for (Index s = 1; s <= d; ++s) {
    const double log_term = std::log(static_cast<double>(n - 1)) + 1.0 - std::log(static_cast<double>(s));
    if (log_term > 0.0 && static_cast<double>(s) <= c_s * static_cast<double>(d) / log_term) best = s;
  }
  return best;
}

/// max_l floor(c_s d_l / log((n_l - 1) e)), the iteration count substituted
/// into the clustering condition for residual-threshold stopping.
inline Index theorem3_smax_substitute(const std::vector<Index>& dims, const std::vector<Index>& counts, double c_s = 0.1) {
  if (dims.size() != counts.size()) throw Error(ErrorCode::LengthMismatch, "theorem3_smax_substitute: length mismatch");
  Index best = 0;
  for (std::size_t l = 0; l < dims.size(); ++l) {
    if (counts[l] < 2) throw Error(ErrorCode::DomainError, "theorem3_smax_substitute: n_l must be >= 2");
    const double v = c_s * static_cast<double>(dims[l]) / (std::log(static_cast<double>(counts[l] - 1)) + 1.0);
    best = std::max(best, static_cast<Index>(std::floor(v)));
  }
  return best;
}

struct Hypotheses {
  bool ambient_large = false;         // m >= 2 d_max
  std::optional<bool> density_large;  // rho_min >= c_rho, unknown without c_rho
  bool noise_small = false;           // sigma <= 1/2
  bool smax_admissible = false;       // s_max within the per-subspace bound
};

inline Hypotheses check_hypotheses(const Params& p) {
  p.validate();
  Hypotheses h;
  h.ambient_large = p.m >= 2 * p.d_max();
  if (p.c_rho) h.density_large = p.rho_min() >= *p.c_rho;
  h.noise_small = p.sigma <= 0.5;
  h.smax_admissible = true;
  for (std::size_t l = 0; l < p.dims.size(); ++l) {
    const double log_term = std::log(static_cast<double>(p.counts[l] - 1)) + 1.0 - std::log(p.s_max);
    if (!(log_term > 0.0) || p.s_max > p.c_s * static_cast<double>(p.dims[l]) / log_term) h.smax_admissible = false;
  }
  return h;
}

/// rho = (c1 / (c2 - aff))^2.
inline double curve_fit_rho_of_aff(double c1, double c2, double aff) {
  const double denom = c2 - aff;
  if (!(denom > 0.0)) throw Error(ErrorCode::DomainError, "curve_fit_rho_of_aff: c2 - aff must be positive");
  const double v = c1 / denom;
  return v * v;
}

struct SigmaCurve {
  double c3 = 0.0, c4 = 0.0, c5 = 0.0, c6 = 0.0, c7 = 0.0;
};

/// rho = (sigma (c5 + c6 sigma) / (c7 - sigma (c3 + sigma c4)))^2.
inline double curve_fit_rho_of_sigma(const SigmaCurve& c, double sigma) {
  const double denom = c.c7 - sigma * (c.c3 + sigma * c.c4);
  if (!(denom > 0.0)) throw Error(ErrorCode::DomainError, "curve_fit_rho_of_sigma: denominator must be positive");
  const double v = sigma * (c.c5 + c.c6 * sigma) / denom;
  return v * v;
}

}  // namespace gssc::theory
