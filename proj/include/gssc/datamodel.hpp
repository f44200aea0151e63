#pragma once

// Union-of-subspaces data: subspace arrangements, noisy samples drawn
// uniformly from each subspace's unit sphere, subspace affinities, and CSV
// ingestion of external data.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <cctype>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gssc/error.hpp"
#include "gssc/numerics.hpp"

namespace gssc {

struct SubspaceArrangement {
  Index m = 0;
  std::vector<Matrix> bases;  // m x d_l, orthonormal columns

  std::size_t size() const { return bases.size(); }
  std::vector<Index> dims() const {
    std::vector<Index> d;
    for (const auto& b : bases) d.push_back(b.cols());
    return d;
  }
};

struct SyntheticConfig {
  std::vector<Index> counts;  // n_l per subspace
  double sigma = 0.0;         // noise ~ N(0, sigma^2/m I)
  RngStream rng{};
};

/// Sampling density (n - 1) / d.
inline double sampling_density(Index n, Index d) { return static_cast<double>(n - 1) / static_cast<double>(d); }

struct DataSet {
  Matrix y;      // m x N, one point per column
  Labels truth;  // empty when unknown
  std::optional<Matrix> noiseless;
  std::optional<SubspaceArrangement> arrangement;

  Index ambient_dim() const { return y.rows(); }
  Index size() const { return y.cols(); }
  bool has_truth() const { return !truth.empty(); }
};

namespace detail {

inline void require_orthonormal(const Matrix& u, const char* who) {
  const Matrix gram = u.transpose() * u;
  if ((gram - Matrix::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff() > 1e-8) {
    throw Error(ErrorCode::NotOrthonormal, std::string(who) + ": basis is not orthonormal");
  }
}

// Orthonormal m x k basis drawn uniformly inside the orthogonal complement of span(core).
inline Matrix random_orthonormal_complement(const Matrix& core, Index k, Rng& rng) {
  const Index m = core.rows();
  Matrix g(m, k);
  for (Index c = 0; c < k; ++c)
    for (Index r = 0; r < m; ++r) g(r, c) = rng.normal();
  if (core.cols() > 0) {
    for (int pass = 0; pass < 2; ++pass) g -= core * (core.transpose() * g);
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(m, k);
  for (Index c = 0; c < k; ++c) {
    if (qr.matrixQR()(c, c) < 0.0) q.col(c) = -q.col(c);
  }
  return q;
}

}  // namespace detail

/// Independent uniformly random subspaces of the given dimensions.
inline SubspaceArrangement sample_arrangement_random(Index m, const std::vector<Index>& dims, RngStream rng) {
  SubspaceArrangement arr{m, {}};
  for (std::size_t l = 0; l < dims.size(); ++l) {
    if (dims[l] < 1 || dims[l] > m) throw Error(ErrorCode::InvalidShape, "sample_arrangement_random: need 1 <= d <= m");
    arr.bases.push_back(random_orthonormal(m, dims[l], rng.derive(l)));
  }
  return arr;
}

/// L subspaces of dimension d sharing a t-dimensional intersection and
/// mutually orthogonal on its complement; pairwise affinity sqrt(t/d).
inline SubspaceArrangement sample_arrangement_shared_intersection(Index m, Index clusters, Index d, Index t,
                                                                  RngStream rng) {
  if (clusters < 1 || d < 1 || t < 0 || t > d) throw Error(ErrorCode::InvalidShape, "shared_intersection: need 0 <= t <= d");
  const Index width = clusters * (d - t) + t;
  if (width > m) throw Error(ErrorCode::InvalidShape, "shared_intersection: L(d-t)+t exceeds m");
  const Matrix u = random_orthonormal(m, width, rng);
  SubspaceArrangement arr{m, {}};
  for (Index l = 0; l < clusters; ++l) {
    Matrix basis(m, d);
    basis.leftCols(t) = u.leftCols(t);
    basis.rightCols(d - t) = u.middleCols(t + l * (d - t), d - t);
    arr.bases.push_back(std::move(basis));
  }
  return arr;
}

/// Subspaces [core, own_l] with a shared random t_core-dimensional core and
/// independent random remainders drawn in the core's orthogonal complement.
inline SubspaceArrangement sample_arrangement_common_core(Index m, const std::vector<Index>& dims, Index t_core,
                                                          RngStream rng) {
  if (t_core < 0 || t_core > m) throw Error(ErrorCode::InvalidShape, "common_core: t_core out of range");
  for (Index d : dims) {
    if (d < t_core || d > m || d < 1) throw Error(ErrorCode::InvalidShape, "common_core: need t_core <= d_l <= m");
  }
  const Matrix core = random_orthonormal(m, t_core, rng.derive(0));
  SubspaceArrangement arr{m, {}};
  for (std::size_t l = 0; l < dims.size(); ++l) {
    Rng own(rng.derive(l + 1));
    Matrix basis(m, dims[l]);
    basis.leftCols(t_core) = core;
    basis.rightCols(dims[l] - t_core) = detail::random_orthonormal_complement(core, dims[l] - t_core, own);
    arr.bases.push_back(std::move(basis));
  }
  return arr;
}

/// Points y = U a + z, a uniform on the unit sphere of the subspace, z
/// Gaussian with covariance (sigma^2/m) I. Subspace-major column order; each
/// point draws from its own child stream.
inline DataSet generate_points(const SubspaceArrangement& arr, const SyntheticConfig& cfg) {
  if (cfg.counts.size() != arr.size()) throw Error(ErrorCode::InvalidShape, "generate_points: counts/bases length mismatch");
  if (!(cfg.sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "generate_points: sigma must be >= 0");
  Index total = 0;
  for (Index n : cfg.counts) {
    if (n < 1) throw Error(ErrorCode::InvalidShape, "generate_points: every n_l must be >= 1");
    total += n;
  }
  const Index m = arr.m;
  const double noise_sd = cfg.sigma / std::sqrt(static_cast<double>(m));
  DataSet ds;
  ds.y.resize(m, total);
  ds.noiseless = Matrix(m, total);
  ds.truth.reserve(static_cast<std::size_t>(total));
  Index p = 0;
  for (std::size_t l = 0; l < arr.size(); ++l) {
    const Matrix& u = arr.bases[l];
    for (Index i = 0; i < cfg.counts[l]; ++i, ++p) {
      Rng rng(cfg.rng.derive(static_cast<std::uint64_t>(p)));
      const Vector x = u * uniform_sphere(u.cols(), rng);
      ds.noiseless->col(p) = x;
      Vector z(m);
      if (cfg.sigma > 0.0) {
        for (Index r = 0; r < m; ++r) z(r) = noise_sd * rng.normal();
      } else {
        z.setZero();
      }
      ds.y.col(p) = x + z;
      ds.truth.push_back(static_cast<int>(l));
    }
  }
  ds.arrangement = arr;
  return ds;
}

struct NormalizedColumns {
  Matrix y;
  std::vector<Index> zero_columns;
};

/// Scales every nonzero column to unit l2 norm; zero columns are kept and reported.
inline NormalizedColumns normalize_columns(const Matrix& y) {
  NormalizedColumns out{y, {}};
  for (Index c = 0; c < y.cols(); ++c) {
    const double norm = y.col(c).norm();
    if (norm > 0.0) {
      out.y.col(c) /= norm;
    } else {
      out.zero_columns.push_back(c);
    }
  }
  return out;
}

/// ||U_k^T U_l||_F / sqrt(min(d_k, d_l)), clamped to [0, 1].
inline double affinity(const Matrix& uk, const Matrix& ul) {
  if (uk.rows() != ul.rows()) throw Error(ErrorCode::InvalidShape, "affinity: ambient dimensions differ");
  detail::require_orthonormal(uk, "affinity");
  detail::require_orthonormal(ul, "affinity");
  const double denom = std::sqrt(static_cast<double>(std::min(uk.cols(), ul.cols())));
  return std::clamp((uk.transpose() * ul).norm() / denom, 0.0, 1.0);
}

/// Principal angles, ascending, from the singular values of U_k^T U_l.
inline Vector principal_angles(const Matrix& uk, const Matrix& ul) {
  if (uk.rows() != ul.rows()) throw Error(ErrorCode::InvalidShape, "principal_angles: ambient dimensions differ");
  detail::require_orthonormal(uk, "principal_angles");
  detail::require_orthonormal(ul, "principal_angles");
  const Vector cosines = singular_values(uk.transpose() * ul);
  Vector angles(cosines.size());
  for (Index i = 0; i < cosines.size(); ++i) angles(i) = std::acos(std::clamp(cosines(i), 0.0, 1.0));
  return angles;
}

inline double max_pairwise_affinity(const SubspaceArrangement& arr) {
  double best = 0.0;
  for (std::size_t k = 0; k < arr.size(); ++k)
    for (std::size_t l = k + 1; l < arr.size(); ++l) best = std::max(best, affinity(arr.bases[k], arr.bases[l]));
  return best;
}

// ---- CSV ingestion -------------------------------------------------------

namespace detail {

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_field(const std::string& raw, const std::string& path, std::size_t line_no) {
  const std::string field = trim(raw);
  T value{};
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (field.empty() || ec != std::errc{} || ptr != last) {
    throw Error(ErrorCode::ParseError, path + ":" + std::to_string(line_no) + ": cannot parse '" + field + "'");
  }
  return value;
}

}  // namespace detail

/// Reads one data point per row; returns the m x N matrix of points as columns.
inline Matrix read_points_csv(const std::string& path) {
  const auto lines = detail::read_lines(path);
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> line_of_row;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (detail::blank(lines[i])) continue;
    std::vector<double> row;
    std::stringstream ss(lines[i]);
    std::string field;
    while (std::getline(ss, field, ',')) row.push_back(detail::parse_field<double>(field, path, i + 1));
    if (lines[i].back() == ',') {
      throw Error(ErrorCode::ParseError, path + ":" + std::to_string(i + 1) + ": trailing comma");
    }
    for (double v : row) {
      if (!std::isfinite(v)) throw Error(ErrorCode::ParseError, path + ":" + std::to_string(i + 1) + ": non-finite value");
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw Error(ErrorCode::DimensionMismatch, path + ":" + std::to_string(i + 1) + ": expected " +
                                                    std::to_string(rows.front().size()) + " values, got " +
                                                    std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
    line_of_row.push_back(i + 1);
  }
  if (rows.empty()) throw Error(ErrorCode::ParseError, path + ": no data rows");
  Matrix y(static_cast<Index>(rows.front().size()), static_cast<Index>(rows.size()));
  for (std::size_t c = 0; c < rows.size(); ++c)
    for (std::size_t r = 0; r < rows[c].size(); ++r) y(static_cast<Index>(r), static_cast<Index>(c)) = rows[c][r];
  return y;
}

/// One integer label per row.
inline Labels read_labels_csv(const std::string& path) {
  const auto lines = detail::read_lines(path);
  Labels out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (detail::blank(lines[i])) continue;
    out.push_back(detail::parse_field<int>(lines[i], path, i + 1));
  }
  return out;
}

inline void write_points_csv(const std::string& path, const Matrix& y) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::ParseError, "cannot write " + path);
  char buf[32];
  for (Index c = 0; c < y.cols(); ++c) {
    for (Index r = 0; r < y.rows(); ++r) {
      std::snprintf(buf, sizeof buf, "%.17g", y(r, c));
      out << (r ? "," : "") << buf;
    }
    out << '\n';
  }
}

inline void write_labels_csv(const std::string& path, const Labels& labels) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::ParseError, "cannot write " + path);
  for (int l : labels) out << l << '\n';
}

/// Loads an external data set; labels are optional.
inline DataSet load_dataset(const std::string& points_path, const std::optional<std::string>& labels_path) {
  DataSet ds;
  ds.y = read_points_csv(points_path);
  if (labels_path) {
    ds.truth = read_labels_csv(*labels_path);
    if (static_cast<Index>(ds.truth.size()) != ds.y.cols()) {
      throw Error(ErrorCode::DimensionMismatch, "label count " + std::to_string(ds.truth.size()) +
                                                    " != point count " + std::to_string(ds.y.cols()));
    }
  }
  return ds;
}

}  // namespace gssc
