// Command-line front end for the experiment harness.
//
//   gssc phase      [--config f] [--seed s] [--trials n] [--out dir] [--threads k] [--dump-raw]
//   gssc dd-sweep   ...
//   gssc di-sweep   ...
//   gssc noiseless  ...
//   gssc cluster    --data points.csv [--labels labels.csv] [--method omp|mp] [--clusters L] ...
//
// Exit status: 0 success, 2 configuration error, 3 some cells failed.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "gssc/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitPartial = 3;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::string out = "out";
  std::optional<unsigned> threads;
  bool dump_raw = false;
};

struct ClusterFlags {
  std::string data;
  std::optional<std::string> labels;
  std::optional<std::string> method;
  std::optional<int> clusters;
  std::optional<std::size_t> s_max;
  std::optional<std::size_t> p_max;
  std::optional<double> tau;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--seed", f.seed, "base seed");
  app->add_option("--trials", f.trials, "Monte-Carlo trials per cell");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--threads", f.threads, "worker threads");
  app->add_flag("--dump-raw", f.dump_raw, "write per-trial coefficients and labels");
}

gssc::harness::ExperimentConfig resolve(gssc::harness::Experiment e, const CommonFlags& f) {
  using namespace gssc::harness;
  ExperimentConfig c = f.config.empty() ? default_config(e) : load_config(f.config, e);
  if (f.seed) c.base_seed = *f.seed;
  if (f.trials) c.trials = *f.trials;
  if (f.threads) c.threads = *f.threads;
  c.dump_raw = c.dump_raw || f.dump_raw;
  c.out = f.out;
  return c;
}

int report(const gssc::harness::SweepResult& res, const std::string& out) {
  gssc::harness::write_outputs(res, out);
  for (const auto& s : res.summaries) {
    for (const auto& msg : s.failures) {
      std::fprintf(stderr, "cell %zu %s: %s\n", s.cell.index, gssc::harness::to_string(s.variant).c_str(), msg.c_str());
    }
  }
  std::printf("wrote %s/grid.csv and %s/summary.json (%.2f s)\n", out.c_str(), out.c_str(), res.wall_seconds);
  return res.partial_failure() ? kExitPartial : kExitOk;
}

int run_cluster(const CommonFlags& f, const ClusterFlags& cf) {
  using namespace gssc::harness;
  ExperimentConfig c = resolve(Experiment::ExternalCluster, f);
  if (!cf.data.empty()) c.data_path = cf.data;
  if (cf.labels) c.labels_path = cf.labels;
  if (cf.method) c.variants = {variant_from_string(*cf.method)};
  if (cf.clusters) c.num_clusters = cf.clusters;
  if (cf.s_max) c.s_max = *cf.s_max;
  if (cf.p_max) c.p_max = cf.p_max;
  if (cf.tau) c.tau = *cf.tau;
  const ExternalResult r = cluster_external(c);
  std::filesystem::create_directories(c.out);
  gssc::write_labels_csv((std::filesystem::path(c.out) / "labels.csv").string(), r.labels);
  std::printf("clusters: %d%s\n", r.clusters, r.clusters_estimated ? " (eigengap estimate)" : "");
  if (r.metrics.ce) {
    std::printf("clustering error: %.6f\n", *r.metrics.ce);
  } else {
    std::printf("clustering error: unavailable (no labels)\n");
  }
  return report(r.sweep, c.out);
}

}  // namespace

int main(int argc, char** argv) {
  using gssc::harness::Experiment;
  CLI::App app{"Greedy sparse subspace clustering experiments"};
  app.require_subcommand(1);

  CommonFlags flags;
  ClusterFlags cflags;
  struct Sub {
    const char* name;
    Experiment experiment;
    const char* help;
  };
  const Sub subs[] = {
      {"phase", Experiment::PhaseDiagram, "clustering error over (t, rho, sigma)"},
      {"dd-sweep", Experiment::DDSweep, "residual-threshold stopping over tau"},
      {"di-sweep", Experiment::DISweep, "iteration-budget stopping over u"},
      {"noiseless", Experiment::NoiselessSweep, "noiseless iteration-budget sweep"},
      {"cluster", Experiment::ExternalCluster, "cluster a CSV data set"},
  };
  std::vector<std::pair<CLI::App*, Experiment>> commands;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, flags);
    if (s.experiment == Experiment::ExternalCluster) {
      sub->add_option("--data", cflags.data, "points CSV, one row per point")->check(CLI::ExistingFile);
      sub->add_option("--labels", cflags.labels, "ground-truth labels CSV")->check(CLI::ExistingFile);
      sub->add_option("--method", cflags.method, "omp, mp or mp_pmax");
      sub->add_option("--clusters", cflags.clusters, "number of clusters (eigengap estimate if omitted)");
      sub->add_option("--s-max", cflags.s_max, "iteration budget");
      sub->add_option("--p-max", cflags.p_max, "MP sparsity budget");
      sub->add_option("--tau", cflags.tau, "residual threshold");
    }
    commands.emplace_back(sub, s.experiment);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    for (const auto& [sub, e] : commands) {
      if (!sub->parsed()) continue;
      if (e == Experiment::ExternalCluster) return run_cluster(flags, cflags);
      return report(gssc::harness::run_sweep(resolve(e, flags)), flags.out);
    }
  } catch (const gssc::Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", std::string(gssc::to_string(e.code())).c_str(), e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitConfig;
}
