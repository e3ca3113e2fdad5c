#pragma once

#include <string>
#include <vector>

#include "dcs/engines.hpp"
#include "dcs/objectives.hpp"
#include "dcs/theory.hpp"
#include "dcs/topology.hpp"
#include "dcs/trace.hpp"

namespace dcs {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { consensus, linreg, logreg, spectra, theory };

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::consensus;

  // topology
  int nodes = 10;
  double edge_probability = 0.9;
  int drop_count = 2;
  int window = 1;       // B
  long horizon = 0;     // 0: sized automatically from the engine step count

  EngineConfig engine;

  // data (optimizing experiments)
  int samples_per_node = 200;
  int dimension = 64;
  double noise_variance = 0.01;
  double mu_reg = 1e-5;

  std::string out_dir = ".";
  std::uint64_t seed = 1;
  int repeat = 1;
  std::uint64_t seed_stride = 1;  // replica r runs with seed + stride * r
  long calibration_windows = 20;  // sigma calibration sample (spectra/theory)
  std::string topology_file;      // replay a serialized topology instead of generating
  bool save_topology = false;     // write topology_r<k>.json per replica
  bool save_dataset = false;      // write the replica-0 dataset as CSV

  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig from_json_file(const std::string& path);
  std::string to_json() const;  // lossless round trip
};

struct ExperimentResult {
  std::vector<RunTrace> traces;
  std::vector<std::string> csv_paths;
  std::string summary;  // JSON for spectra/theory, empty otherwise
};

// Builds topology/data per replica, runs them (in a worker pool when
// repeat > 1), writes one CSV per replica plus an aggregate CSV.
ExperimentResult run_experiment(const ExperimentConfig& config);

void export_csv(const RunTrace& trace, const std::string& path);
RunTrace import_csv(const std::string& path);
void export_aggregate_csv(const std::vector<RunTrace>& traces,
                          const std::string& path);

// Plots one metric pair (CSV column names) across traces.
void export_svg(const std::vector<std::pair<std::string, const RunTrace*>>& traces,
                const std::string& x_metric, const std::string& y_metric,
                const std::string& path);

// Bundled desk-scale study configurations ("consensus", "linreg", "all").
int run_reproduce_suite(const std::string& suite, const std::string& out_dir,
                        std::uint64_t seed);

// CLI entry point (subcommands: consensus, optimize, spectra, theory,
// reproduce). Exit codes: 0 success, 1 config error, 2 runtime error.
int cli_main(int argc, const char* const* argv);

}  // namespace dcs
