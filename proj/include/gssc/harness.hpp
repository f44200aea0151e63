#pragma once

// Monte-Carlo experiment runner. An experiment is a list of grid cells; each
// (cell, trial) pair is an independent task seeded by
// (base_seed, cell index, trial index), so results do not depend on the
// number of worker threads. Aggregation happens in fixed cell/trial order.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "gssc/datamodel.hpp"
#include "gssc/error.hpp"
#include "gssc/graph.hpp"
#include "gssc/metrics.hpp"
#include "gssc/numerics.hpp"
#include "gssc/pipeline.hpp"
#include "gssc/pursuit.hpp"
#include "gssc/spectral.hpp"
#include "gssc/theory.hpp"

namespace gssc::harness {

inline constexpr const char* kVersion = "1.0.0";

enum class Experiment { PhaseDiagram, DDSweep, DISweep, NoiselessSweep, ExternalCluster };

inline std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::PhaseDiagram: return "phase";
    case Experiment::DDSweep: return "dd-sweep";
    case Experiment::DISweep: return "di-sweep";
    case Experiment::NoiselessSweep: return "noiseless";
    case Experiment::ExternalCluster: return "cluster";
  }
  return "unknown";
}

inline Experiment experiment_from_string(const std::string& s) {
  for (auto e : {Experiment::PhaseDiagram, Experiment::DDSweep, Experiment::DISweep, Experiment::NoiselessSweep,
                 Experiment::ExternalCluster}) {
    if (to_string(e) == s) return e;
  }
  throw Error(ErrorCode::ConfigError, "unknown experiment '" + s + "'");
}

enum class Construction { SharedIntersection, CommonCore };

/// Pursuit variants. `omp` and `mp` use the experiment's iteration budget
/// (MP with p_max = N); `mp_pmax` bounds MP by sparsity p_max = u instead.
enum class Variant { Omp, Mp, MpPmax };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::Omp: return "omp";
    case Variant::Mp: return "mp";
    case Variant::MpPmax: return "mp_pmax";
  }
  return "unknown";
}

inline Variant variant_from_string(const std::string& s) {
  for (auto v : {Variant::Omp, Variant::Mp, Variant::MpPmax}) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorCode::ConfigError, "unknown method '" + s + "'");
}

struct AffCurve {
  double c1 = 0.37;
  double c2 = 1.0;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::PhaseDiagram;
  std::size_t trials = 10;
  std::uint64_t base_seed = 1;
  unsigned threads = 1;
  bool dump_raw = false;
  std::string out = "out";

  // geometry
  Index clusters = 3;             // L
  Index d = 20;                   // equal subspace dimension
  std::vector<Index> dims;        // per-subspace dimensions (dd-sweep)
  Index m = 200;
  Index t_core = 4;               // shared dimensions for common-core arrangements
  Construction construction = Construction::SharedIntersection;

  // grid axes
  std::vector<Index> t_grid;
  std::vector<double> rho_grid;
  std::vector<double> sigma_grid;
  std::vector<double> tau_grid;
  std::vector<std::size_t> u_grid;
  std::vector<std::pair<Index, double>> t_rho_pairs;  // noiseless sweep

  // pursuit
  std::vector<Variant> variants;
  std::size_t s_max = 10;
  std::optional<std::size_t> iter_cap;
  double alpha = 1.0;
  double zero_tol = 1e-12;
  int spectral_restarts = 10;

  // phase-diagram overlays
  std::optional<AffCurve> aff_curve;
  std::optional<theory::SigmaCurve> sigma_curve;

  // external clustering
  std::string data_path;
  std::optional<std::string> labels_path;
  std::optional<int> num_clusters;
  std::optional<std::size_t> p_max;
  double tau = 0.0;
  bool normalize = true;
};

/// Desk-scale defaults mirroring the published experiment setups.
inline ExperimentConfig default_config(Experiment e) {
  ExperimentConfig c;
  c.experiment = e;
  switch (e) {
    case Experiment::PhaseDiagram:
      c.clusters = 3;
      c.d = 20;
      c.m = 200;
      c.s_max = 10;
      c.t_grid = {0, 6, 12, 18};
      c.rho_grid = {4.0};
      c.sigma_grid = {0.25, 0.5, 0.75, 1.0};
      c.variants = {Variant::Omp, Variant::Mp};
      c.trials = 10;
      c.aff_curve = AffCurve{0.37, 1.0};
      c.sigma_curve = theory::SigmaCurve{0.2, 0.5, 1.0, 0.7, 2.3};
      break;
    case Experiment::DDSweep:
      c.m = 300;
      c.dims = {20, 40, 60, 80};
      c.clusters = 4;
      c.t_core = 4;
      c.construction = Construction::CommonCore;
      c.rho_grid = {4.0};
      c.sigma_grid = {0.2, 0.5};
      c.tau_grid = {0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
      c.variants = {Variant::Omp, Variant::Mp};
      c.trials = 5;
      break;
    case Experiment::DISweep:
      c.clusters = 3;
      c.m = 80;
      c.d = 15;
      c.t_core = 3;
      c.construction = Construction::CommonCore;
      c.rho_grid = {4.0};
      c.sigma_grid = {0.5};
      for (std::size_t u = 1; u <= 30; ++u) c.u_grid.push_back(u);
      c.variants = {Variant::Omp, Variant::Mp, Variant::MpPmax};
      c.trials = 10;
      break;
    case Experiment::NoiselessSweep:
      c.clusters = 3;
      c.m = 80;
      c.d = 15;
      c.sigma_grid = {0.0};
      c.t_rho_pairs = {{5, 3.0}, {10, 3.0}, {10, 6.0}};
      for (std::size_t u = 1; u <= 30; ++u) c.u_grid.push_back(u);
      c.variants = {Variant::Omp, Variant::Mp, Variant::MpPmax};
      c.trials = 10;
      break;
    case Experiment::ExternalCluster:
      c.variants = {Variant::Mp};
      c.s_max = 5;
      c.trials = 1;
      break;
  }
  return c;
}

// ---- JSON config ----------------------------------------------------------

namespace detail {

using nlohmann::json;

template <class T>
void read_opt(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

template <class T>
void read_opt(const json& j, const char* key, std::optional<T>& dst) {
  if (j.contains(key)) {
    if (j.at(key).is_null()) {
      dst.reset();
    } else {
      dst = j.at(key).get<T>();
    }
  }
}

inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "experiment", "trials", "seed", "threads", "dump_raw", "out", "L", "d", "dims", "m", "t_core",
      "construction", "t", "rho", "sigma", "tau", "u", "t_rho_pairs", "methods", "s_max", "p_max", "iter_cap",
      "alpha", "zero_tol", "spectral_restarts", "aff_curve", "sigma_curve", "data", "labels", "clusters",
      "normalize"};
  return keys;
}

}  // namespace detail

/// Builds a config from JSON on top of the experiment defaults. Unknown keys
/// are rejected.
inline ExperimentConfig config_from_json(const nlohmann::json& j, std::optional<Experiment> forced = std::nullopt) {
  using detail::read_opt;
  try {
    if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      const auto& keys = detail::known_keys();
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
        throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
      }
    }
    Experiment e = forced.value_or(Experiment::PhaseDiagram);
    if (j.contains("experiment")) {
      const Experiment named = experiment_from_string(j.at("experiment").get<std::string>());
      if (forced && named != *forced) {
        throw Error(ErrorCode::ConfigError, "config is for '" + to_string(named) + "', command is '" + to_string(*forced) + "'");
      }
      e = named;
    }
    ExperimentConfig c = default_config(e);
    read_opt(j, "trials", c.trials);
    read_opt(j, "seed", c.base_seed);
    read_opt(j, "threads", c.threads);
    read_opt(j, "dump_raw", c.dump_raw);
    read_opt(j, "out", c.out);
    read_opt(j, "L", c.clusters);
    read_opt(j, "d", c.d);
    read_opt(j, "dims", c.dims);
    read_opt(j, "m", c.m);
    read_opt(j, "t_core", c.t_core);
    if (j.contains("construction")) {
      const auto s = j.at("construction").get<std::string>();
      if (s == "shared") {
        c.construction = Construction::SharedIntersection;
      } else if (s == "common_core") {
        c.construction = Construction::CommonCore;
      } else {
        throw Error(ErrorCode::ConfigError, "construction must be 'shared' or 'common_core'");
      }
    }
    read_opt(j, "t", c.t_grid);
    read_opt(j, "rho", c.rho_grid);
    read_opt(j, "sigma", c.sigma_grid);
    read_opt(j, "tau", c.tau_grid);
    read_opt(j, "u", c.u_grid);
    if (j.contains("t_rho_pairs")) {
      c.t_rho_pairs.clear();
      for (const auto& p : j.at("t_rho_pairs")) c.t_rho_pairs.emplace_back(p.at(0).get<Index>(), p.at(1).get<double>());
    }
    if (j.contains("methods")) {
      c.variants.clear();
      for (const auto& s : j.at("methods")) c.variants.push_back(variant_from_string(s.get<std::string>()));
    }
    read_opt(j, "s_max", c.s_max);
    read_opt(j, "p_max", c.p_max);
    read_opt(j, "iter_cap", c.iter_cap);
    read_opt(j, "alpha", c.alpha);
    read_opt(j, "zero_tol", c.zero_tol);
    read_opt(j, "spectral_restarts", c.spectral_restarts);
    if (j.contains("aff_curve")) {
      if (j.at("aff_curve").is_null()) {
        c.aff_curve.reset();
      } else {
        c.aff_curve = AffCurve{j.at("aff_curve").at("c1").get<double>(), j.at("aff_curve").at("c2").get<double>()};
      }
    }
    if (j.contains("sigma_curve")) {
      if (j.at("sigma_curve").is_null()) {
        c.sigma_curve.reset();
      } else {
        const auto& s = j.at("sigma_curve");
        c.sigma_curve = theory::SigmaCurve{s.at("c3").get<double>(), s.at("c4").get<double>(), s.at("c5").get<double>(),
                                           s.at("c6").get<double>(), s.at("c7").get<double>()};
      }
    }
    read_opt(j, "data", c.data_path);
    read_opt(j, "labels", c.labels_path);
    read_opt(j, "clusters", c.num_clusters);
    read_opt(j, "normalize", c.normalize);
    return c;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::ConfigError, ex.what());
  }
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["experiment"] = to_string(c.experiment);
  j["trials"] = c.trials;
  j["seed"] = c.base_seed;
  j["dump_raw"] = c.dump_raw;
  j["L"] = c.clusters;
  j["d"] = c.d;
  j["dims"] = c.dims;
  j["m"] = c.m;
  j["t_core"] = c.t_core;
  j["construction"] = c.construction == Construction::SharedIntersection ? "shared" : "common_core";
  j["t"] = c.t_grid;
  j["rho"] = c.rho_grid;
  j["sigma"] = c.sigma_grid;
  j["tau"] = c.tau_grid;
  j["u"] = c.u_grid;
  j["t_rho_pairs"] = nlohmann::json::array();
  for (const auto& [t, rho] : c.t_rho_pairs) j["t_rho_pairs"].push_back({t, rho});
  j["methods"] = nlohmann::json::array();
  for (auto v : c.variants) j["methods"].push_back(to_string(v));
  j["s_max"] = c.s_max;
  j["p_max"] = c.p_max ? nlohmann::json(*c.p_max) : nlohmann::json(nullptr);
  j["iter_cap"] = c.iter_cap ? nlohmann::json(*c.iter_cap) : nlohmann::json(nullptr);
  j["alpha"] = c.alpha;
  j["zero_tol"] = c.zero_tol;
  j["spectral_restarts"] = c.spectral_restarts;
  j["aff_curve"] = c.aff_curve ? nlohmann::json{{"c1", c.aff_curve->c1}, {"c2", c.aff_curve->c2}} : nlohmann::json(nullptr);
  j["sigma_curve"] = c.sigma_curve ? nlohmann::json{{"c3", c.sigma_curve->c3}, {"c4", c.sigma_curve->c4},
                                                    {"c5", c.sigma_curve->c5}, {"c6", c.sigma_curve->c6},
                                                    {"c7", c.sigma_curve->c7}}
                                   : nlohmann::json(nullptr);
  if (c.experiment == Experiment::ExternalCluster) {
    j["data"] = c.data_path;
    j["labels"] = c.labels_path ? nlohmann::json(*c.labels_path) : nlohmann::json(nullptr);
    j["clusters"] = c.num_clusters ? nlohmann::json(*c.num_clusters) : nlohmann::json(nullptr);
    j["tau"] = c.tau;
    j["normalize"] = c.normalize;
  }
  return j;
}

inline ExperimentConfig load_config(const std::string& path, std::optional<Experiment> forced = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::ConfigError, path + ": " + ex.what());
  }
  return config_from_json(j, forced);
}

// ---- grid ------------------------------------------------------------------

struct Cell {
  std::size_t index = 0;
  std::optional<Index> t;
  std::optional<double> rho;
  std::optional<double> sigma;
  std::optional<double> tau;
  std::optional<std::size_t> u;
};

inline std::vector<Cell> build_cells(const ExperimentConfig& c) {
  std::vector<Cell> cells;
  auto push = [&](Cell cell) {
    cell.index = cells.size();
    cells.push_back(cell);
  };
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::ConfigError, what);
  };
  switch (c.experiment) {
    case Experiment::PhaseDiagram:
      require(!c.t_grid.empty() && !c.rho_grid.empty() && !c.sigma_grid.empty(), "phase: t, rho and sigma grids must be nonempty");
      for (Index t : c.t_grid)
        for (double rho : c.rho_grid)
          for (double sigma : c.sigma_grid) push(Cell{0, t, rho, sigma, std::nullopt, std::nullopt});
      break;
    case Experiment::DDSweep:
      require(!c.rho_grid.empty() && !c.sigma_grid.empty() && !c.tau_grid.empty(), "dd-sweep: rho, sigma and tau grids must be nonempty");
      for (double rho : c.rho_grid)
        for (double sigma : c.sigma_grid)
          for (double tau : c.tau_grid) push(Cell{0, std::nullopt, rho, sigma, tau, std::nullopt});
      break;
    case Experiment::DISweep:
      require(!c.rho_grid.empty() && !c.sigma_grid.empty() && !c.u_grid.empty(), "di-sweep: rho, sigma and u grids must be nonempty");
      for (double rho : c.rho_grid)
        for (double sigma : c.sigma_grid)
          for (std::size_t u : c.u_grid) push(Cell{0, c.t_core, rho, sigma, std::nullopt, u});
      break;
    case Experiment::NoiselessSweep:
      require(!c.t_rho_pairs.empty() && !c.u_grid.empty(), "noiseless: t_rho_pairs and u grid must be nonempty");
      for (const auto& [t, rho] : c.t_rho_pairs)
        for (std::size_t u : c.u_grid) push(Cell{0, t, rho, 0.0, std::nullopt, u});
      break;
    case Experiment::ExternalCluster:
      push(Cell{});
      break;
  }
  return cells;
}

// ---- one trial ---------------------------------------------------------------

struct VariantOutcome {
  bool failed = false;
  std::string failure;
  std::optional<double> ce;
  std::optional<bool> nfc;
  std::vector<SubspaceRates> subspaces;
  std::optional<L1Norms> l1;
  double mean_iterations = 0.0;
  double mean_support = 0.0;
  std::array<double, kStopReasonCount> stop_fraction{};
  std::optional<double> tp_bound_fraction;  // share of points meeting the TP lower bound
  std::vector<Index> tp_bounds;             // per subspace
  double pursuit_seconds = 0.0;
  int estimated_clusters = 0;
  Labels predicted;
};

struct TrialOutcome {
  std::vector<VariantOutcome> variants;  // aligned with config.variants
};

struct TrialContext {
  const ExperimentConfig& cfg;
  const Cell& cell;
  std::size_t trial;
};

inline RngStream trial_stream(std::uint64_t base_seed, std::size_t cell, std::size_t trial) {
  return RngStream{base_seed, 0}.derive(cell).derive(trial);
}

inline Index points_per_subspace(double rho, Index d) {
  return std::max<Index>(2, static_cast<Index>(std::llround(rho * static_cast<double>(d))));
}

/// Raw per-trial artifacts written with --dump-raw.
inline void dump_raw(const ExperimentConfig& c, const Cell& cell, std::size_t trial, Variant v, const DataSet& ds,
                     const std::vector<PursuitResult>& reps, const Labels& pred) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(c.out) / "raw";
  fs::create_directories(dir);
  const std::string stem = "cell" + std::to_string(cell.index) + "_trial" + std::to_string(trial) + "_" + to_string(v);
  std::ofstream coef(dir / (stem + "_coef.csv"));
  coef << "point,index,value\n";
  char buf[40];
  for (const auto& r : reps) {
    for (const auto& e : r.coefficients) {
      std::snprintf(buf, sizeof buf, "%.17g", e.value);
      coef << r.point << ',' << e.index << ',' << buf << '\n';
    }
  }
  std::ofstream lab(dir / (stem + "_labels.csv"));
  lab << "point,truth,pred\n";
  for (Index j = 0; j < ds.size(); ++j) {
    lab << j << ',' << (ds.has_truth() ? std::to_string(ds.truth[j]) : "") << ','
        << (pred.empty() ? "" : std::to_string(pred[j])) << '\n';
  }
}

namespace detail {

inline DataSet make_dataset(const ExperimentConfig& c, const Cell& cell, RngStream rng) {
  SubspaceArrangement arr;
  std::vector<Index> dims;
  if (c.experiment == Experiment::DDSweep) {
    dims = c.dims;
    if (dims.empty()) throw Error(ErrorCode::ConfigError, "dd-sweep: dims must be nonempty");
    arr = sample_arrangement_common_core(c.m, dims, c.t_core, rng.derive(0));
  } else {
    dims.assign(static_cast<std::size_t>(c.clusters), c.d);
    const Index t = cell.t.value_or(0);
    if (c.construction == Construction::SharedIntersection) {
      arr = sample_arrangement_shared_intersection(c.m, c.clusters, c.d, t, rng.derive(0));
    } else {
      arr = sample_arrangement_common_core(c.m, dims, t, rng.derive(0));
    }
  }
  SyntheticConfig sc;
  for (Index d : dims) sc.counts.push_back(points_per_subspace(cell.rho.value_or(4.0), d));
  sc.sigma = cell.sigma.value_or(0.0);
  sc.rng = rng.derive(1);
  return generate_points(arr, sc);
}

inline PursuitConfig make_pursuit(const ExperimentConfig& c, const Cell& cell, Variant v, Index n_points) {
  PursuitConfig p;
  p.method = v == Variant::Omp ? Method::OMP : Method::MP;
  p.alpha = c.alpha;
  p.zero_tol = c.zero_tol;
  p.iter_cap = c.iter_cap;
  const auto all = static_cast<std::size_t>(n_points);
  switch (c.experiment) {
    case Experiment::PhaseDiagram:
      p.s_max = c.s_max;
      if (v != Variant::Omp) p.p_max = all;
      if (v == Variant::MpPmax) {
        p.s_max.reset();
        p.p_max = c.s_max;
      }
      break;
    case Experiment::DDSweep:
      p.tau = *cell.tau;
      break;
    case Experiment::DISweep:
    case Experiment::NoiselessSweep:
      if (v == Variant::MpPmax) {
        p.p_max = *cell.u;
      } else {
        p.s_max = *cell.u;
        if (v == Variant::Mp) p.p_max = all;
      }
      break;
    case Experiment::ExternalCluster:
      p.s_max = c.s_max;
      p.p_max = c.p_max;
      p.tau = c.tau;
      if (v == Variant::MpPmax) {
        p.s_max.reset();
        p.p_max = c.p_max.value_or(c.s_max);
      }
      break;
  }
  return p;
}

inline bool needs_clustering(Experiment e) { return e != Experiment::DDSweep; }

inline VariantOutcome run_variant(const ExperimentConfig& c, const Cell& cell, std::size_t trial, Variant v,
                                  std::size_t vi, const DataSet& ds, RngStream rng, std::optional<int> clusters) {
  VariantOutcome out;
  const PursuitConfig pc = make_pursuit(c, cell, v, ds.size());
  const auto start = std::chrono::steady_clock::now();
  std::vector<PursuitResult> reps = represent_all(ds.y, pc, 1);
  out.pursuit_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const auto& r : reps) {
    if (!r.ok()) {
      out.failed = true;
      out.failure = "point " + std::to_string(r.point) + ": " + r.failure;
      return out;
    }
  }
  const CoefficientMatrix coeffs = coefficient_matrix(reps);
  const AffinityGraph graph = build_adjacency(coeffs);

  Labels pred;
  if (needs_clustering(c.experiment)) {
    int k = 0;
    if (clusters) {
      k = *clusters;
    } else {
      k = estimate_num_clusters_eigengap(graph, default_max_clusters(ds.size()));
      out.estimated_clusters = k;
    }
    SpectralConfig sc;
    sc.restarts = c.spectral_restarts;
    sc.rng = rng.derive(2 + vi);
    pred = normalized_spectral_clustering(graph, k, sc);
  }

  std::vector<Index> dims;
  Index ambient = 0;
  if (ds.arrangement) {
    dims = ds.arrangement->dims();
    ambient = ds.arrangement->m;
  }
  MetricsReport rep = evaluate(reps, coeffs, graph, pred, ds.truth, dims, ambient);
  out.ce = needs_clustering(c.experiment) ? rep.ce : std::nullopt;
  out.nfc = rep.nfc;
  out.subspaces = std::move(rep.subspaces);
  out.l1 = rep.l1;
  out.mean_iterations = rep.mean_iterations;
  out.mean_support = rep.mean_support;
  for (const auto& r : reps) out.stop_fraction[static_cast<int>(r.stop_reason)] += 1.0;
  for (auto& f : out.stop_fraction) f /= static_cast<double>(reps.size());

  if (c.experiment == Experiment::DDSweep && ds.has_truth() && ds.arrangement) {
    const auto sizes = ds.arrangement->dims();
    std::vector<Index> counts(sizes.size(), 0);
    for (int l : ds.truth) ++counts[l];
    for (std::size_t l = 0; l < sizes.size(); ++l) {
      out.tp_bounds.push_back(
          theory::theorem3_tp_lower_bound(sizes[l], counts[l], ds.ambient_dim(), *cell.sigma, *cell.tau).bound);
    }
    const auto tp = true_positive_counts(reps, ds.truth);
    std::size_t meets = 0;
    for (std::size_t j = 0; j < tp.size(); ++j) meets += tp[j] >= out.tp_bounds[ds.truth[j]] ? 1 : 0;
    out.tp_bound_fraction = static_cast<double>(meets) / static_cast<double>(tp.size());
  }
  if (c.dump_raw) dump_raw(c, cell, trial, v, ds, reps, pred);
  out.predicted = std::move(pred);
  return out;
}

}  // namespace detail

inline TrialOutcome run_trial(const ExperimentConfig& c, const Cell& cell, std::size_t trial) {
  TrialOutcome out;
  const RngStream rng = trial_stream(c.base_seed, cell.index, trial);
  DataSet ds;
  try {
    ds = detail::make_dataset(c, cell, rng);
    ds.y = normalize_columns(ds.y).y;
  } catch (const std::exception& e) {
    for (std::size_t vi = 0; vi < c.variants.size(); ++vi) {
      VariantOutcome vo;
      vo.failed = true;
      vo.failure = e.what();
      out.variants.push_back(std::move(vo));
    }
    return out;
  }
  for (std::size_t vi = 0; vi < c.variants.size(); ++vi) {
    const Variant v = c.variants[vi];
    try {
      out.variants.push_back(detail::run_variant(c, cell, trial, v, vi, ds, rng, static_cast<int>(c.clusters)));
    } catch (const std::exception& e) {
      VariantOutcome vo;
      vo.failed = true;
      vo.failure = e.what();
      out.variants.push_back(std::move(vo));
    }
  }
  return out;
}

// ---- aggregation -------------------------------------------------------------

struct MetricValue {
  std::string name;
  double value = 0.0;
  std::size_t count = 0;
};

struct CellSummary {
  Cell cell;
  Variant variant = Variant::Omp;
  std::size_t failed_trials = 0;
  std::vector<std::string> failures;
  std::vector<MetricValue> metrics;  // fixed order
  double mean_pursuit_seconds = 0.0;
  std::optional<int> estimated_clusters;

  std::optional<double> get(const std::string& name) const {
    for (const auto& mv : metrics) {
      if (mv.name == name) return mv.value;
    }
    return std::nullopt;
  }
};

struct SweepResult {
  ExperimentConfig config;
  std::vector<Cell> cells;
  std::vector<CellSummary> summaries;  // cell-major, then variant
  double wall_seconds = 0.0;

  bool partial_failure() const {
    for (const auto& s : summaries) {
      if (s.failed_trials > 0) return true;
    }
    return false;
  }
  const CellSummary* find(std::size_t cell, Variant v) const {
    for (const auto& s : summaries) {
      if (s.cell.index == cell && s.variant == v) return &s;
    }
    return nullptr;
  }
};

namespace detail {

class Accumulator {
 public:
  void add(const std::string& name, double v) {
    auto it = index_.find(name);
    if (it == index_.end()) {
      index_.emplace(name, items_.size());
      items_.push_back({name, 0.0, 0});
      it = index_.find(name);
    }
    auto& item = items_[it->second];
    item.value += v;
    ++item.count;
  }
  std::vector<MetricValue> means() const {
    std::vector<MetricValue> out = items_;
    for (auto& m : out) m.value /= static_cast<double>(m.count);
    return out;
  }

 private:
  std::vector<MetricValue> items_;
  std::map<std::string, std::size_t> index_;
};

inline void accumulate(Accumulator& acc, const VariantOutcome& o) {
  if (o.ce) acc.add("ce", *o.ce);
  if (o.nfc) acc.add("nfc_rate", *o.nfc ? 1.0 : 0.0);
  if (o.ce && o.nfc) acc.add("success_rate", (*o.nfc && *o.ce == 0.0) ? 1.0 : 0.0);
  if (o.l1) {
    acc.add("tp_l1", o.l1->tp);
    acc.add("fp_l1", o.l1->fp);
  }
  acc.add("mean_iterations", o.mean_iterations);
  acc.add("mean_support", o.mean_support);
  if (!o.subspaces.empty()) {
    double tpr = 0.0, fpr = 0.0;
    for (const auto& s : o.subspaces) {
      tpr += s.tpr_size;
      fpr += s.fpr_size;
    }
    acc.add("tpr_size", tpr / static_cast<double>(o.subspaces.size()));
    acc.add("fpr_size", fpr / static_cast<double>(o.subspaces.size()));
  }
  for (const auto& s : o.subspaces) {
    const std::string sfx = "_l" + std::to_string(s.label);
    acc.add("tp_count" + sfx, s.tp_count);
    acc.add("fp_count" + sfx, s.fp_count);
    if (!std::isnan(s.tpr_dim)) {
      acc.add("tpr_dim" + sfx, s.tpr_dim);
      acc.add("fpr_dim" + sfx, s.fpr_dim);
    }
    acc.add("tpr_size" + sfx, s.tpr_size);
    acc.add("fpr_size" + sfx, s.fpr_size);
  }
  for (int r = 0; r < kStopReasonCount; ++r) {
    acc.add("stop_" + std::string(to_string(static_cast<StopReason>(r))), o.stop_fraction[r]);
  }
  if (o.tp_bound_fraction) {
    acc.add("tp_bound_fraction", *o.tp_bound_fraction);
    for (std::size_t l = 0; l < o.tp_bounds.size(); ++l) {
      acc.add("tp_bound_l" + std::to_string(l), static_cast<double>(o.tp_bounds[l]));
    }
  }
}

inline void add_theory_overlays(const ExperimentConfig& c, const Cell& cell, std::vector<MetricValue>& metrics) {
  if (c.experiment != Experiment::PhaseDiagram || !cell.t) return;
  const double aff = std::sqrt(static_cast<double>(*cell.t) / static_cast<double>(c.d));
  if (c.aff_curve && c.aff_curve->c2 > aff) {
    metrics.push_back({"rho_fit_aff", theory::curve_fit_rho_of_aff(c.aff_curve->c1, c.aff_curve->c2, aff), 1});
  }
  if (c.sigma_curve && cell.sigma) {
    const double s = *cell.sigma;
    if (c.sigma_curve->c7 - s * (c.sigma_curve->c3 + s * c.sigma_curve->c4) > 0.0) {
      metrics.push_back({"rho_fit_sigma", theory::curve_fit_rho_of_sigma(*c.sigma_curve, s), 1});
    }
  }
}

}  // namespace detail

inline std::vector<CellSummary> aggregate(const ExperimentConfig& c, const std::vector<Cell>& cells,
                                          const std::vector<TrialOutcome>& outcomes) {
  std::vector<CellSummary> out;
  for (const auto& cell : cells) {
    for (std::size_t vi = 0; vi < c.variants.size(); ++vi) {
      CellSummary s;
      s.cell = cell;
      s.variant = c.variants[vi];
      detail::Accumulator acc;
      double secs = 0.0;
      std::size_t ok = 0;
      for (std::size_t t = 0; t < c.trials; ++t) {
        const VariantOutcome& o = outcomes[cell.index * c.trials + t].variants[vi];
        if (o.failed) {
          ++s.failed_trials;
          s.failures.push_back("trial " + std::to_string(t) + ": " + o.failure);
          continue;
        }
        detail::accumulate(acc, o);
        secs += o.pursuit_seconds;
        ++ok;
        if (o.estimated_clusters > 0) s.estimated_clusters = o.estimated_clusters;
      }
      s.metrics = acc.means();
      detail::add_theory_overlays(c, cell, s.metrics);
      if (s.failed_trials > 0) s.metrics.push_back({"failed_trials", static_cast<double>(s.failed_trials), c.trials});
      s.mean_pursuit_seconds = ok ? secs / static_cast<double>(ok) : 0.0;
      out.push_back(std::move(s));
    }
  }
  return out;
}

/// Runs every (cell, trial) task on `cfg.threads` workers.
inline SweepResult run_sweep(const ExperimentConfig& cfg) {
  if (cfg.trials < 1) throw Error(ErrorCode::ConfigError, "trials must be >= 1");
  if (cfg.variants.empty()) throw Error(ErrorCode::ConfigError, "at least one method is required");
  const auto start = std::chrono::steady_clock::now();
  SweepResult res;
  res.config = cfg;
  res.cells = build_cells(cfg);
  if (res.cells.empty()) throw Error(ErrorCode::ConfigError, "every grid axis needs at least one value");
  const std::size_t tasks = res.cells.size() * cfg.trials;
  std::vector<TrialOutcome> outcomes(tasks);
  auto work = [&](std::size_t task) {
    outcomes[task] = run_trial(cfg, res.cells[task / cfg.trials], task % cfg.trials);
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(tasks)));
  if (threads == 1) {
    for (std::size_t t = 0; t < tasks; ++t) work(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < threads; ++i) {
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < tasks; t = next++) work(t);
      });
    }
  }
  res.summaries = aggregate(cfg, res.cells, outcomes);
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

inline SweepResult run_phase_diagram(ExperimentConfig cfg) {
  cfg.experiment = Experiment::PhaseDiagram;
  return run_sweep(cfg);
}
inline SweepResult run_dd_sweep(ExperimentConfig cfg) {
  cfg.experiment = Experiment::DDSweep;
  return run_sweep(cfg);
}
inline SweepResult run_di_sweep(ExperimentConfig cfg) {
  cfg.experiment = Experiment::DISweep;
  return run_sweep(cfg);
}
inline SweepResult run_noiseless_sweep(ExperimentConfig cfg) {
  cfg.experiment = Experiment::NoiselessSweep;
  for (double s : cfg.sigma_grid) {
    if (s != 0.0) throw Error(ErrorCode::ConfigError, "noiseless: sigma must be 0");
  }
  return run_sweep(cfg);
}

// ---- external data -----------------------------------------------------------

struct ExternalResult {
  SweepResult sweep;  // one cell, one variant
  Labels labels;
  int clusters = 0;
  bool clusters_estimated = false;
  MetricsReport metrics;
};

/// Clusters a user-supplied CSV data set with one pursuit variant.
inline ExternalResult cluster_external(ExperimentConfig cfg) {
  cfg.experiment = Experiment::ExternalCluster;
  if (cfg.data_path.empty()) throw Error(ErrorCode::ConfigError, "cluster: a data file is required");
  if (cfg.variants.size() != 1) throw Error(ErrorCode::ConfigError, "cluster: exactly one method is required");
  DataSet ds = load_dataset(cfg.data_path, cfg.labels_path);
  if (ds.size() < 2) throw Error(ErrorCode::DimensionMismatch, "cluster: need at least 2 points");
  if (cfg.normalize) ds.y = normalize_columns(ds.y).y;

  const auto start = std::chrono::steady_clock::now();
  Cell cell;
  const Variant v = cfg.variants.front();
  const PursuitConfig pc = detail::make_pursuit(cfg, cell, v, ds.size());
  SpectralConfig sc;
  sc.restarts = cfg.spectral_restarts;
  sc.rng = trial_stream(cfg.base_seed, 0, 0).derive(2);
  ClusteringResult cr = cluster_subspaces(ds.y, pc, cfg.num_clusters, sc, std::max(1u, cfg.threads));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const auto& r : cr.representations) {
    if (!r.ok()) throw Error(ErrorCode::InvalidArgument, "point " + std::to_string(r.point) + ": " + r.failure);
  }

  ExternalResult out;
  out.labels = cr.labels;
  out.clusters = cr.clusters;
  out.clusters_estimated = cr.clusters_estimated;
  out.metrics = evaluate(cr.representations, cr.coefficients, cr.graph, cr.labels, ds.truth);

  VariantOutcome vo;
  vo.ce = out.metrics.ce;
  vo.nfc = out.metrics.nfc;
  vo.subspaces = out.metrics.subspaces;
  vo.l1 = out.metrics.l1;
  vo.mean_iterations = out.metrics.mean_iterations;
  vo.mean_support = out.metrics.mean_support;
  for (const auto& r : cr.representations) vo.stop_fraction[static_cast<int>(r.stop_reason)] += 1.0;
  for (auto& f : vo.stop_fraction) f /= static_cast<double>(cr.representations.size());
  vo.pursuit_seconds = secs;
  if (cr.clusters_estimated) vo.estimated_clusters = cr.clusters;

  cfg.trials = 1;
  out.sweep.config = cfg;
  out.sweep.cells = {cell};
  out.sweep.summaries = aggregate(cfg, out.sweep.cells, {TrialOutcome{{vo}}});
  out.sweep.wall_seconds = secs;
  if (cfg.dump_raw) {
    dump_raw(cfg, cell, 0, v, ds, cr.representations, cr.labels);
  }
  return out;
}

// ---- output ----------------------------------------------------------------

namespace detail {

inline std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

template <class T>
std::string fmt_opt(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_floating_point_v<T>) {
    return fmt_num(*v);
  } else {
    return std::to_string(*v);
  }
}

}  // namespace detail

/// Long-format grid: one row per cell, variant and metric. Contains no timing
/// data, so reruns are byte-identical.
inline std::string grid_csv(const SweepResult& res) {
  std::ostringstream os;
  os << "cell,method,t,rho,sigma,tau,u,metric,value,trials\n";
  for (const auto& s : res.summaries) {
    const Cell& c = s.cell;
    const std::string prefix = std::to_string(c.index) + "," + to_string(s.variant) + "," + detail::fmt_opt(c.t) + "," +
                               detail::fmt_opt(c.rho) + "," + detail::fmt_opt(c.sigma) + "," + detail::fmt_opt(c.tau) +
                               "," + detail::fmt_opt(c.u) + ",";
    for (const auto& mv : s.metrics) {
      os << prefix << mv.name << "," << detail::fmt_num(mv.value) << "," << mv.count << "\n";
    }
  }
  return os.str();
}

inline nlohmann::json summary_json(const SweepResult& res) {
  nlohmann::json j;
  j["config"] = config_to_json(res.config);
  j["versions"] = {{"gssc", kVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"compiler", __VERSION__}};
  j["wall_seconds"] = res.wall_seconds;
  j["partial_failure"] = res.partial_failure();
  auto& cells = j["cells"] = nlohmann::json::array();
  for (const auto& s : res.summaries) {
    nlohmann::json e;
    e["cell"] = s.cell.index;
    e["method"] = to_string(s.variant);
    if (s.cell.t) e["t"] = *s.cell.t;
    if (s.cell.rho) e["rho"] = *s.cell.rho;
    if (s.cell.sigma) e["sigma"] = *s.cell.sigma;
    if (s.cell.tau) e["tau"] = *s.cell.tau;
    if (s.cell.u) e["u"] = *s.cell.u;
    e["failed_trials"] = s.failed_trials;
    if (!s.failures.empty()) e["failures"] = s.failures;
    e["mean_pursuit_seconds"] = s.mean_pursuit_seconds;
    if (s.estimated_clusters) e["estimated_clusters"] = *s.estimated_clusters;
    if (res.config.experiment == Experiment::ExternalCluster && !res.config.labels_path) {
      e["unavailable"] = {"ce", "nfc"};
    }
    for (const auto& mv : s.metrics) e["metrics"][mv.name] = mv.value;
    cells.push_back(std::move(e));
  }
  return j;
}

inline void write_outputs(const SweepResult& res, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "grid.csv", std::ios::binary);
    if (!out) throw Error(ErrorCode::ConfigError, "cannot write " + dir + "/grid.csv");
    out << grid_csv(res);
  }
  std::ofstream out(fs::path(dir) / "summary.json");
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write " + dir + "/summary.json");
  out << summary_json(res).dump(2) << '\n';
}

}  // namespace gssc::harness
