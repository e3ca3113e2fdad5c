#include "dcs/harness.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "dcs/mixing.hpp"
#include "dcs/svg.hpp"
#include "json.hpp"

namespace dcs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

ExperimentKind parse_kind(const std::string& s) {
  if (s == "consensus") return ExperimentKind::consensus;
  if (s == "linreg") return ExperimentKind::linreg;
  if (s == "logreg") return ExperimentKind::logreg;
  if (s == "spectra") return ExperimentKind::spectra;
  if (s == "theory") return ExperimentKind::theory;
  throw ConfigError("unknown experiment kind: " + s);
}

std::string kind_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::consensus: return "consensus";
    case ExperimentKind::linreg: return "linreg";
    case ExperimentKind::logreg: return "logreg";
    case ExperimentKind::spectra: return "spectra";
    case ExperimentKind::theory: return "theory";
  }
  return "?";
}

EngineKind parse_engine_kind(const std::string& s) {
  if (s == "consensus") return EngineKind::consensus;
  if (s == "svrg") return EngineKind::svrg;
  if (s == "full_grad") return EngineKind::full_grad;
  if (s == "plain_sgd") return EngineKind::plain_sgd;
  throw ConfigError("unknown engine kind: " + s);
}

std::string engine_kind_name(EngineKind k) {
  switch (k) {
    case EngineKind::consensus: return "consensus";
    case EngineKind::svrg: return "svrg";
    case EngineKind::full_grad: return "full_grad";
    case EngineKind::plain_sgd: return "plain_sgd";
  }
  return "?";
}

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> known,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool found = false;
    for (const char* k : known)
      if (key == k) {
        found = true;
        break;
      }
    if (!found) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown_keys(doc,
                      {"experiment", "topology", "engine", "data", "out", "seed",
                       "repeat", "seed_stride", "calibration_windows",
                       "topology_file", "save_topology", "save_dataset"},
                      "config");

  ExperimentConfig cfg;
  cfg.kind = parse_kind(doc.at("experiment").get<std::string>());

  if (doc.contains("topology")) {
    const json& t = doc["topology"];
    reject_unknown_keys(t, {"n", "p", "drop", "B", "horizon"}, "topology");
    cfg.nodes = t.value("n", cfg.nodes);
    cfg.edge_probability = t.value("p", cfg.edge_probability);
    cfg.drop_count = t.value("drop", cfg.drop_count);
    cfg.window = t.value("B", cfg.window);
    cfg.horizon = t.value("horizon", cfg.horizon);
  }
  if (doc.contains("engine")) {
    const json& e = doc["engine"];
    reject_unknown_keys(e,
                        {"kind", "alpha", "gamma", "q", "T", "epochs", "steps",
                         "stop_residual", "record_stride", "record_boundaries",
                         "record_masks", "cross_check"},
                        "engine");
    if (e.contains("kind")) cfg.engine.kind = parse_engine_kind(e["kind"].get<std::string>());
    cfg.engine.alpha = e.value("alpha", cfg.engine.alpha);
    cfg.engine.gamma = e.value("gamma", cfg.engine.gamma);
    cfg.engine.q = e.value("q", cfg.engine.q);
    cfg.engine.inner_steps = e.value("T", cfg.engine.inner_steps);
    cfg.engine.epochs = e.value("epochs", cfg.engine.epochs);
    cfg.engine.steps = e.value("steps", cfg.engine.steps);
    cfg.engine.stop_residual = e.value("stop_residual", cfg.engine.stop_residual);
    cfg.engine.record_stride = e.value("record_stride", cfg.engine.record_stride);
    cfg.engine.record_boundaries = e.value("record_boundaries", cfg.engine.record_boundaries);
    cfg.engine.record_masks = e.value("record_masks", cfg.engine.record_masks);
    cfg.engine.cross_check = e.value("cross_check", cfg.engine.cross_check);
  }
  if (doc.contains("data")) {
    const json& d = doc["data"];
    reject_unknown_keys(d, {"m", "d", "noise_variance", "mu_reg"}, "data");
    cfg.samples_per_node = d.value("m", cfg.samples_per_node);
    cfg.dimension = d.value("d", cfg.dimension);
    cfg.noise_variance = d.value("noise_variance", cfg.noise_variance);
    cfg.mu_reg = d.value("mu_reg", cfg.mu_reg);
  }
  cfg.out_dir = doc.value("out", cfg.out_dir);
  cfg.seed = doc.value("seed", cfg.seed);
  cfg.repeat = doc.value("repeat", cfg.repeat);
  cfg.seed_stride = doc.value("seed_stride", cfg.seed_stride);
  cfg.calibration_windows = doc.value("calibration_windows", cfg.calibration_windows);
  cfg.topology_file = doc.value("topology_file", cfg.topology_file);
  cfg.save_topology = doc.value("save_topology", cfg.save_topology);
  cfg.save_dataset = doc.value("save_dataset", cfg.save_dataset);

  // Optimizing traces are recorded at block boundaries plus a decimated
  // stride unless the config asks for something else.
  const bool opt_kind = cfg.kind == ExperimentKind::linreg ||
                        cfg.kind == ExperimentKind::logreg ||
                        cfg.kind == ExperimentKind::theory;
  if (opt_kind && (!doc.contains("engine") ||
                   !doc["engine"].contains("record_stride")))
    cfg.engine.record_stride = 10;

  // Validate before anything runs.
  if (cfg.nodes < 2) throw ConfigError("topology.n must be >= 2");
  if (cfg.edge_probability < 0.0 || cfg.edge_probability > 1.0)
    throw ConfigError("topology.p must lie in [0, 1]");
  if (cfg.drop_count < 0) throw ConfigError("topology.drop must be >= 0");
  if (cfg.window < 1) throw ConfigError("topology.B must be >= 1");
  if (cfg.horizon < 0) throw ConfigError("topology.horizon must be >= 0");
  if (cfg.dimension < 1) throw ConfigError("data.d must be >= 1");
  if (cfg.samples_per_node < 1) throw ConfigError("data.m must be >= 1");
  if (cfg.repeat < 1) throw ConfigError("repeat must be >= 1");
  if (cfg.engine.q <= 0.0 || cfg.engine.q > 1.0)
    throw ConfigError("engine.q must lie in (0, 1]");
  if (cfg.engine.gamma <= 0.0 || cfg.engine.gamma >= 1.0)
    throw ConfigError("engine.gamma must lie in (0, 1)");
  const bool optimizing = cfg.kind == ExperimentKind::linreg ||
                          cfg.kind == ExperimentKind::logreg;
  if (cfg.kind == ExperimentKind::consensus &&
      cfg.engine.kind != EngineKind::consensus)
    throw ConfigError("consensus experiments require engine.kind = consensus");
  if (optimizing && cfg.engine.kind == EngineKind::consensus)
    throw ConfigError("optimizing experiments require an optimizing engine kind");
  if (optimizing && cfg.engine.alpha <= 0.0)
    throw ConfigError("optimizing experiments require engine.alpha > 0");
  return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::string ExperimentConfig::to_json() const {
  json doc;
  doc["experiment"] = kind_name(kind);
  doc["topology"] = {{"n", nodes},
                     {"p", edge_probability},
                     {"drop", drop_count},
                     {"B", window},
                     {"horizon", horizon}};
  doc["engine"] = {{"kind", engine_kind_name(engine.kind)},
                   {"alpha", engine.alpha},
                   {"gamma", engine.gamma},
                   {"q", engine.q},
                   {"T", engine.inner_steps},
                   {"epochs", engine.epochs},
                   {"steps", engine.steps},
                   {"stop_residual", engine.stop_residual},
                   {"record_stride", engine.record_stride},
                   {"record_boundaries", engine.record_boundaries},
                   {"record_masks", engine.record_masks},
                   {"cross_check", engine.cross_check}};
  doc["data"] = {{"m", samples_per_node},
                 {"d", dimension},
                 {"noise_variance", noise_variance},
                 {"mu_reg", mu_reg}};
  doc["out"] = out_dir;
  doc["seed"] = seed;
  doc["repeat"] = repeat;
  doc["seed_stride"] = seed_stride;
  doc["calibration_windows"] = calibration_windows;
  doc["topology_file"] = topology_file;
  doc["save_topology"] = save_topology;
  doc["save_dataset"] = save_dataset;
  return doc.dump(2);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kCsvHeader =
    "t,residual,consensus_error,optimality_error,tracking_error,"
    "comm_entries_cum,grad_evals_cum";

}  // namespace

void export_csv(const RunTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_csv: cannot open " + path);
  out << kCsvHeader << '\n';
  for (const auto& rec : trace.steps) {
    out << rec.t << ',' << fmt17(rec.residual) << ','
        << fmt17(rec.consensus_error) << ',' << fmt17(rec.optimality_error)
        << ',' << fmt17(rec.tracking_error) << ',' << rec.comm_entries_cum
        << ',' << fmt17(rec.grad_evals_cum) << '\n';
  }
  if (!out) throw std::runtime_error("export_csv: write failed for " + path);
}

RunTrace import_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("import_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader)
    throw std::runtime_error("import_csv: header does not match schema");
  RunTrace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    StepRecord rec;
    const char* p = line.c_str();
    char* end = nullptr;
    rec.t = std::strtol(p, &end, 10);
    auto next = [&]() {
      if (*end != ',') throw std::runtime_error("import_csv: malformed row");
      p = end + 1;
      return std::strtod(p, &end);
    };
    rec.residual = next();
    rec.consensus_error = next();
    rec.optimality_error = next();
    rec.tracking_error = next();
    if (*end != ',') throw std::runtime_error("import_csv: malformed row");
    p = end + 1;
    rec.comm_entries_cum = std::strtoull(p, &end, 10);
    rec.grad_evals_cum = next();
    trace.steps.push_back(rec);
  }
  if (!trace.steps.empty()) {
    trace.steps_taken = trace.steps.back().t;
    trace.final_residual = trace.steps.back().residual;
    trace.comm_entries_total = trace.steps.back().comm_entries_cum;
    trace.grad_evals_total = trace.steps.back().grad_evals_cum;
  }
  return trace;
}

namespace {

using MetricGetter = std::function<double(const StepRecord&)>;

MetricGetter metric_getter(const std::string& name) {
  if (name == "t") return [](const StepRecord& r) { return static_cast<double>(r.t); };
  if (name == "residual") return [](const StepRecord& r) { return r.residual; };
  if (name == "consensus_error")
    return [](const StepRecord& r) { return r.consensus_error; };
  if (name == "optimality_error")
    return [](const StepRecord& r) { return r.optimality_error; };
  if (name == "tracking_error")
    return [](const StepRecord& r) { return r.tracking_error; };
  if (name == "comm_entries_cum")
    return [](const StepRecord& r) { return static_cast<double>(r.comm_entries_cum); };
  if (name == "grad_evals_cum")
    return [](const StepRecord& r) { return r.grad_evals_cum; };
  throw std::invalid_argument("unknown metric: " + name);
}

}  // namespace

void export_aggregate_csv(const std::vector<RunTrace>& traces,
                          const std::string& path) {
  if (traces.empty()) throw std::invalid_argument("export_aggregate_csv: no traces");
  std::size_t rows = traces.front().steps.size();
  for (const auto& t : traces) rows = std::min(rows, t.steps.size());

  const char* metrics[] = {"residual",       "consensus_error",
                           "optimality_error", "tracking_error",
                           "comm_entries_cum", "grad_evals_cum"};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_aggregate_csv: cannot open " + path);
  out << 't';
  for (const char* m : metrics) out << ',' << m << "_mean," << m << "_std";
  out << '\n';

  for (std::size_t r = 0; r < rows; ++r) {
    const long t = traces.front().steps[r].t;
    for (const auto& trace : traces)
      if (trace.steps[r].t != t)
        throw std::runtime_error("export_aggregate_csv: traces disagree on steps");
    out << t;
    for (const char* m : metrics) {
      const MetricGetter get = metric_getter(m);
      double mean = 0.0;
      for (const auto& trace : traces) mean += get(trace.steps[r]);
      mean /= static_cast<double>(traces.size());
      double var = 0.0;
      for (const auto& trace : traces) {
        const double dev = get(trace.steps[r]) - mean;
        var += dev * dev;
      }
      var /= static_cast<double>(traces.size());
      out << ',' << fmt17(mean) << ',' << fmt17(std::sqrt(var));
    }
    out << '\n';
  }
}

void export_svg(const std::vector<std::pair<std::string, const RunTrace*>>& traces,
                const std::string& x_metric, const std::string& y_metric,
                const std::string& path) {
  if (traces.empty()) throw std::invalid_argument("export_svg: no traces");
  const MetricGetter gx = metric_getter(x_metric);
  const MetricGetter gy = metric_getter(y_metric);
  const bool log_y = y_metric == "residual" || y_metric == "consensus_error" ||
                     y_metric == "optimality_error" || y_metric == "tracking_error";
  std::vector<SvgSeries> series;
  for (const auto& [label, trace] : traces) {
    SvgSeries s;
    s.label = label;
    s.x.reserve(trace->steps.size());
    s.y.reserve(trace->steps.size());
    for (const auto& rec : trace->steps) {
      s.x.push_back(gx(rec));
      s.y.push_back(gy(rec));
    }
    series.push_back(std::move(s));
  }
  write_svg_plot(series, x_metric, y_metric, log_y, path);
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

namespace {

long auto_horizon(const ExperimentConfig& cfg, long total_steps) {
  if (cfg.horizon > 0) {
    if (cfg.horizon < total_steps)
      throw ConfigError("topology.horizon is shorter than the configured run");
    return cfg.horizon;
  }
  const long b = cfg.window;
  return ((total_steps + b - 1) / b) * b;
}

struct ReplicaProblem {
  TimeVaryingTopology topology;
  Eigen::MatrixXd x0;
  Dataset data;
  ObjectiveConstants consts;
  Eigen::VectorXd x_star;
};

ReplicaProblem build_problem(const ExperimentConfig& cfg, std::uint64_t seed,
                             long total_steps) {
  ReplicaProblem prob;
  const long horizon = auto_horizon(cfg, total_steps);
  try {
    if (!cfg.topology_file.empty()) {
      std::ifstream in(cfg.topology_file);
      if (!in) throw ConfigError("cannot open topology file: " + cfg.topology_file);
      std::stringstream buf;
      buf << in.rdbuf();
      prob.topology = TimeVaryingTopology::from_json(buf.str());
      if (prob.topology.node_count != cfg.nodes ||
          prob.topology.window != cfg.window)
        throw ConfigError("replayed topology disagrees with the config (n or B)");
      if (prob.topology.horizon() < total_steps)
        throw ConfigError("replayed topology is shorter than the configured run");
    } else {
      Rng topo_rng = Rng::substream(seed, "topology");
      prob.topology =
          build_joint_topology(cfg.nodes, cfg.edge_probability, cfg.drop_count,
                               cfg.window, horizon, topo_rng);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("topology stage: ") + e.what());
  }

  Rng init_rng = Rng::substream(seed, "init");
  prob.x0 = Eigen::MatrixXd::NullaryExpr(
      cfg.nodes, cfg.dimension, [&](Eigen::Index, Eigen::Index) { return init_rng.normal(); });

  if (cfg.kind == ExperimentKind::linreg || cfg.kind == ExperimentKind::theory) {
    try {
      Rng data_rng = Rng::substream(seed, "data");
      prob.data = gen_linreg(cfg.nodes, cfg.samples_per_node, cfg.dimension,
                             cfg.noise_variance, data_rng)
                      .data;
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("data stage: ") + e.what());
    }
  } else if (cfg.kind == ExperimentKind::logreg) {
    try {
      Rng data_rng = Rng::substream(seed, "data");
      prob.data = gen_logreg(cfg.nodes, cfg.samples_per_node, cfg.dimension,
                             cfg.mu_reg, data_rng);
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("data stage: ") + e.what());
    }
  }
  if (!prob.data.samples.empty()) {
    try {
      prob.consts = constants(prob.data);
      prob.x_star = centralized_optimum(prob.data).x_star;
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("optimum stage: ") + e.what());
    }
  }
  return prob;
}

RunTrace run_replica(const ExperimentConfig& cfg, std::uint64_t seed,
                     int replica) {
  const long total = cfg.engine.total_steps();
  ReplicaProblem prob = build_problem(cfg, seed, total);
  if (cfg.save_topology) {
    std::ofstream out(fs::path(cfg.out_dir) /
                      ("topology_r" + std::to_string(replica) + ".json"));
    out << prob.topology.to_json() << '\n';
  }
  if (cfg.save_dataset && replica == 0 && !prob.data.samples.empty())
    write_dataset_csv(prob.data, (fs::path(cfg.out_dir) / "dataset").string());

  EngineConfig engine = cfg.engine;
  engine.window = cfg.window;
  engine.seed = seed;
  try {
    if (cfg.kind == ExperimentKind::consensus)
      return consensus_run(prob.topology, prob.x0, engine);
    if (engine.kind == EngineKind::svrg)
      return svrg_run(prob.topology, prob.data, prob.consts, prob.x_star,
                      prob.x0, engine);
    return ablation_run(prob.topology, prob.data, prob.consts, prob.x_star,
                        prob.x0, engine);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("engine stage: ") + e.what());
  }
}

std::vector<RunTrace> run_replicas(const ExperimentConfig& cfg) {
  std::vector<RunTrace> traces(cfg.repeat);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= cfg.repeat) return;
      try {
        traces[r] = run_replica(cfg, cfg.seed + cfg.seed_stride * r, r);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const int workers = std::max(1, std::min<int>(cfg.repeat,
      static_cast<int>(std::thread::hardware_concurrency())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return traces;
}

ExperimentResult run_trace_experiment(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  ExperimentResult result;
  result.traces = run_replicas(cfg);

  for (int r = 0; r < cfg.repeat; ++r) {
    const std::string path =
        (fs::path(cfg.out_dir) / ("trace_r" + std::to_string(r) + ".csv")).string();
    export_csv(result.traces[r], path);
    result.csv_paths.push_back(path);
  }
  const std::string agg = (fs::path(cfg.out_dir) / "aggregate.csv").string();
  export_aggregate_csv(result.traces, agg);
  result.csv_paths.push_back(agg);

  if (cfg.engine.cross_check) {
    json diag;
    auto& divs = diag["elementwise_max_divergence"] = json::array();
    for (const auto& trace : result.traces)
      divs.push_back(trace.elementwise_max_divergence);
    std::ofstream out(fs::path(cfg.out_dir) / "diagnostics.json");
    out << diag.dump(2) << '\n';
  }

  std::ofstream cfg_echo(fs::path(cfg.out_dir) / "config.json");
  cfg_echo << cfg.to_json() << '\n';
  return result;
}

ExperimentResult run_spectra(const ExperimentConfig& cfg) {
  const long windows =
      cfg.horizon > 0 ? cfg.horizon / cfg.window : cfg.calibration_windows;
  ExperimentConfig sized = cfg;
  sized.horizon = windows * cfg.window;

  Rng topo_rng = Rng::substream(cfg.seed, "topology");
  TimeVaryingTopology topology =
      build_joint_topology(cfg.nodes, cfg.edge_probability, cfg.drop_count,
                           cfg.window, sized.horizon, topo_rng);

  // Masks replayed exactly as an engine with this seed would draw them.
  Rng mask_rng = Rng::substream(cfg.seed, "masks");
  std::vector<std::vector<CoordinateMask>> masks(sized.horizon);
  for (long t = 0; t < sized.horizon; ++t)
    for (int v = 0; v < 2 * cfg.nodes; ++v)
      masks[t].push_back(draw_mask(cfg.dimension, cfg.engine.q, mask_rng));

  fs::create_directories(cfg.out_dir);
  const std::string csv_path = (fs::path(cfg.out_dir) / "spectra.csv").string();
  std::ofstream out(csv_path);
  out << "window,coordinate,lambda1,lambda2,sigma,gap\n";
  double sigma_max = 0.0;
  for (long k = 0; k < windows; ++k) {
    std::vector<std::vector<CoordinateMask>> step_masks(
        masks.begin() + k * cfg.window, masks.begin() + (k + 1) * cfg.window);
    const WindowMatrices wm = window_matrices(topology, k, step_masks,
                                              cfg.engine.gamma, cfg.dimension);
    for (int m = 0; m < cfg.dimension; ++m) {
      const SpectralReport rep = spectral_sigma(wm.m_blocks[m], wm.b_products[m]);
      sigma_max = std::max(sigma_max, rep.sigma);
      out << k << ',' << m << ',' << fmt17(rep.m_moduli[0]) << ','
          << fmt17(rep.lambda2_m) << ',' << fmt17(rep.sigma) << ','
          << fmt17(rep.spectral_gap) << '\n';
    }
  }

  json summary = {{"sigma_max", sigma_max},
                  {"gamma", cfg.engine.gamma},
                  {"q", cfg.engine.q},
                  {"B", cfg.window}};
  const std::string json_path = (fs::path(cfg.out_dir) / "spectra.json").string();
  std::ofstream jout(json_path);
  jout << summary.dump(2) << '\n';

  ExperimentResult result;
  result.csv_paths = {csv_path, json_path};
  result.summary = summary.dump();
  return result;
}

ExperimentResult run_theory(const ExperimentConfig& cfg) {
  ExperimentConfig run_cfg = cfg;
  run_cfg.kind = ExperimentKind::theory;
  if (run_cfg.engine.kind == EngineKind::consensus)
    run_cfg.engine.kind = EngineKind::svrg;
  if (run_cfg.engine.inner_steps <= 0)
    run_cfg.engine.inner_steps = 10L * run_cfg.window;
  if (run_cfg.engine.epochs <= 0) run_cfg.engine.epochs = 4;
  run_cfg.engine.record_boundaries = true;

  const long total = run_cfg.engine.total_steps();
  const long horizon = std::max(auto_horizon(run_cfg, total),
                                run_cfg.calibration_windows * run_cfg.window);
  run_cfg.horizon = horizon;

  // One fixed problem instance; the ensemble varies masks and sample draws.
  ReplicaProblem prob = build_problem(run_cfg, run_cfg.seed, total);

  const SigmaCalibration cal =
      calibrate_sigma(prob.topology, run_cfg.dimension, run_cfg.engine.q,
                      run_cfg.engine.gamma, run_cfg.seed,
                      run_cfg.calibration_windows);

  if (cal.sigma_max >= 1.0 - 1e-12)
    throw std::runtime_error(
        "theory: calibrated sigma reached 1 (a node can stay silent on a "
        "coordinate for a whole window at this q/B); the rate formulas are "
        "undefined for this configuration");

  TheoryInputs inputs;
  inputs.sigma = cal.sigma_max;
  inputs.smoothness = prob.consts.smoothness;
  inputs.strong_convexity = prob.consts.strong_convexity;
  inputs.window = run_cfg.window;
  inputs.node_count = run_cfg.nodes;

  const double alpha_bound = step_size_bound(inputs);
  const long t_bound = epoch_length_bound(inputs);
  const double lambda = outer_contraction(inputs, t_bound);
  const NormCertificates cert = norm_certificates(alpha_bound, inputs);

  const double run_alpha =
      run_cfg.engine.alpha > 0.0 ? run_cfg.engine.alpha : alpha_bound;
  run_cfg.engine.alpha = run_alpha;

  std::vector<std::vector<ErrorPoint>> ensemble;
  ensemble.reserve(run_cfg.repeat);
  std::vector<RunTrace> traces(run_cfg.repeat);
  {
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
      for (;;) {
        const int r = next.fetch_add(1);
        if (r >= run_cfg.repeat) return;
        try {
          EngineConfig engine = run_cfg.engine;
          engine.window = run_cfg.window;
          engine.seed = run_cfg.seed + run_cfg.seed_stride * r;
          traces[r] = svrg_run(prob.topology, prob.data, prob.consts,
                               prob.x_star, prob.x0, engine);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    };
    const int workers = std::max(1, std::min<int>(run_cfg.repeat,
        static_cast<int>(std::thread::hardware_concurrency())));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }
  for (const auto& trace : traces)
    ensemble.push_back(
        errors_from_trace(trace, prob.x_star, prob.consts.smoothness));

  const ErrorSystem system =
      build_error_system(run_alpha, inputs, run_cfg.nodes);
  const RecursionReport recursion = verify_error_recursion(ensemble, system);

  fs::create_directories(run_cfg.out_dir);
  json report = {{"sigma", inputs.sigma},   {"alpha", alpha_bound},
                 {"T", t_bound},            {"lambda", lambda},
                 {"lemma5_ok", cert.ok},    {"prop1_worst_ratio", recursion.worst_ratio}};
  const std::string json_path = (fs::path(run_cfg.out_dir) / "theory.json").string();
  std::ofstream jout(json_path);
  jout << report.dump(2) << '\n';

  // Ensemble-mean error sequences, one row per block boundary.
  const std::string csv_path =
      (fs::path(run_cfg.out_dir) / "u_sequences.csv").string();
  std::ofstream out(csv_path);
  out << "t,u1,u2,u3,ut1,ut2\n";
  const std::size_t count = ensemble.front().size();
  for (std::size_t k = 0; k < count; ++k) {
    Eigen::Vector3d u = Eigen::Vector3d::Zero();
    Eigen::Vector3d ut = Eigen::Vector3d::Zero();
    for (const auto& run : ensemble) {
      u += run[k].u;
      ut += run[k].u_tilde;
    }
    u /= static_cast<double>(ensemble.size());
    ut /= static_cast<double>(ensemble.size());
    out << ensemble.front()[k].t << ',' << fmt17(u[0]) << ',' << fmt17(u[1])
        << ',' << fmt17(u[2]) << ',' << fmt17(ut[0]) << ',' << fmt17(ut[1])
        << '\n';
  }

  ExperimentResult result;
  result.traces = std::move(traces);
  result.csv_paths = {csv_path, json_path};
  result.summary = report.dump();
  return result;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  switch (config.kind) {
    case ExperimentKind::spectra:
      return run_spectra(config);
    case ExperimentKind::theory:
      return run_theory(config);
    default:
      return run_trace_experiment(config);
  }
}

// ---------------------------------------------------------------------------
// Reproduction suites
// ---------------------------------------------------------------------------

namespace {

json reproduce_consensus(const std::string& out_dir, std::uint64_t seed) {
  const double levels[] = {1.0, 0.5, 0.25, 0.156, 0.078, 0.039};
  json section = json::array();
  for (int b : {1, 10}) {
    std::vector<RunTrace> traces;
    std::vector<std::string> labels;
    for (double q : levels) {
      ExperimentConfig cfg;
      cfg.kind = ExperimentKind::consensus;
      cfg.nodes = 10;
      cfg.dimension = 64;
      cfg.window = b;
      cfg.engine.kind = EngineKind::consensus;
      cfg.engine.gamma = 0.05;
      cfg.engine.q = q;
      cfg.engine.steps = b == 1 ? 4000 : 12000;
      cfg.engine.stop_residual = 1e-12;
      cfg.engine.record_stride = 1;
      cfg.seed = seed;
      cfg.out_dir = (fs::path(out_dir) /
                     ("consensus_B" + std::to_string(b) + "_q" + fmt17(q)))
                        .string();
      ExperimentResult res = run_experiment(cfg);
      json entry = {{"B", b},
                    {"q", q},
                    {"steps_to_threshold", res.traces.front().steps_taken},
                    {"final_residual", res.traces.front().final_residual},
                    {"comm_entries", res.traces.front().comm_entries_total}};
      section.push_back(entry);
      labels.push_back("q=" + fmt17(q));
      traces.push_back(std::move(res.traces.front()));
    }
    std::vector<std::pair<std::string, const RunTrace*>> plot;
    for (std::size_t i = 0; i < traces.size(); ++i)
      plot.emplace_back(labels[i], &traces[i]);
    export_svg(plot, "t", "residual",
               (fs::path(out_dir) / ("consensus_B" + std::to_string(b) + ".svg")).string());
    export_svg(plot, "comm_entries_cum", "residual",
               (fs::path(out_dir) /
                ("consensus_B" + std::to_string(b) + "_comm.svg")).string());
  }
  return section;
}

struct LinregVariant {
  const char* label;
  EngineKind kind;
  double q;
};

constexpr LinregVariant kLinregVariants[] = {
    {"svrg q=1", EngineKind::svrg, 1.0},
    {"svrg q=0.08", EngineKind::svrg, 0.08},
    {"svrg q=0.05", EngineKind::svrg, 0.05},
    {"full_grad", EngineKind::full_grad, 1.0},
    {"plain_sgd", EngineKind::plain_sgd, 1.0}};

// Regression instance with unit-norm feature rows. Unlike the row-sum
// rescaled model, its component smoothness is 2 for every seed, so a step
// size exists at which all engine variants are stable.
LinregInstance unit_row_linreg(int nodes, int samples, int dimension,
                               double noise_std, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "data");
  LinregInstance inst;
  inst.data.kind = ObjectiveKind::linear;
  inst.planted_x = Eigen::VectorXd::NullaryExpr(
      dimension, [&](Eigen::Index) { return rng.normal(); });
  for (int i = 0; i < nodes; ++i) {
    Eigen::MatrixXd d(samples, dimension);
    for (int r = 0; r < samples; ++r) {
      do {
        for (int c = 0; c < dimension; ++c) d(r, c) = rng.normal();
      } while (d.row(r).norm() == 0.0);
      d.row(r) /= d.row(r).norm();
    }
    Eigen::VectorXd noise = Eigen::VectorXd::NullaryExpr(
        samples, [&](Eigen::Index) { return noise_std * rng.normal(); });
    inst.data.targets.push_back(d * inst.planted_x + noise);
    inst.data.samples.push_back(std::move(d));
  }
  return inst;
}

json reproduce_linreg_rowsum(const std::string& out_dir, std::uint64_t seed) {
  json section = json::array();
  std::vector<RunTrace> traces;
  std::vector<std::string> labels;
  for (const LinregVariant& v : kLinregVariants) {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::linreg;
    cfg.nodes = 10;
    cfg.dimension = 64;
    cfg.samples_per_node = 200;
    cfg.noise_variance = 0.01;
    cfg.window = 5;
    cfg.engine.kind = v.kind;
    cfg.engine.alpha = 0.002;
    cfg.engine.gamma = 0.05;
    cfg.engine.q = v.q;
    cfg.engine.inner_steps = 400;
    cfg.engine.epochs = 50;
    cfg.engine.steps = 20000;
    cfg.engine.record_stride = 20;
    cfg.seed = seed;
    cfg.out_dir = (fs::path(out_dir) / (std::string("linreg_") +
                                        engine_kind_name(v.kind) + "_q" +
                                        fmt17(v.q)))
                      .string();
    json entry = {{"label", v.label}, {"q", v.q}};
    try {
      ExperimentResult res = run_experiment(cfg);
      entry["final_residual"] = res.traces.front().final_residual;
      entry["grad_evals_per_sample"] = res.traces.front().grad_evals_total;
      entry["comm_entries"] = res.traces.front().comm_entries_total;
      labels.push_back(v.label);
      traces.push_back(std::move(res.traces.front()));
    } catch (const std::exception& e) {
      entry["error"] = e.what();  // run recorded as absent from the figures
    }
    section.push_back(entry);
  }
  std::vector<std::pair<std::string, const RunTrace*>> plot;
  for (std::size_t i = 0; i < traces.size(); ++i)
    plot.emplace_back(labels[i], &traces[i]);
  if (!plot.empty()) {
    export_svg(plot, "t", "residual",
               (fs::path(out_dir) / "linreg_residual_vs_iterations.svg").string());
    export_svg(plot, "grad_evals_cum", "residual",
               (fs::path(out_dir) / "linreg_residual_vs_grad_evals.svg").string());
    export_svg(plot, "comm_entries_cum", "residual",
               (fs::path(out_dir) / "linreg_residual_vs_comm.svg").string());
  }
  return section;
}

json reproduce_linreg_unit_rows(const std::string& out_dir, std::uint64_t seed) {
  auto inst = unit_row_linreg(10, 200, 64, 0.1, seed);
  const ObjectiveConstants consts = constants(inst.data);
  const Eigen::VectorXd x_star = centralized_optimum(inst.data).x_star;
  Rng init = Rng::substream(seed, "init");
  Eigen::MatrixXd x0 = Eigen::MatrixXd::NullaryExpr(
      10, 64, [&](Eigen::Index, Eigen::Index) { return init.normal(); });
  Rng topo_rng = Rng::substream(seed, "topology");
  const long steps = 60000;
  auto topology = build_joint_topology(10, 0.9, 2, 5, steps, topo_rng);

  json section = json::array();
  std::vector<RunTrace> traces;
  std::vector<std::string> labels;
  for (const LinregVariant& v : kLinregVariants) {
    EngineConfig cfg;
    cfg.kind = v.kind;
    cfg.alpha = 0.1;
    cfg.gamma = 0.05;
    cfg.q = v.q;
    cfg.window = 5;
    cfg.inner_steps = 400;
    cfg.epochs = static_cast<int>(steps / 400);
    cfg.steps = steps;
    cfg.seed = seed + 13;
    cfg.record_stride = 100;
    json entry = {{"label", v.label}, {"q", v.q}};
    try {
      RunTrace trace =
          v.kind == EngineKind::svrg
              ? svrg_run(topology, inst.data, consts, x_star, x0, cfg)
              : ablation_run(topology, inst.data, consts, x_star, x0, cfg);
      entry["final_residual"] = trace.final_residual;
      entry["grad_evals_per_sample"] = trace.grad_evals_total;
      entry["comm_entries"] = trace.comm_entries_total;
      const std::string csv =
          (fs::path(out_dir) / (std::string("linreg_unit_rows_") +
                                engine_kind_name(v.kind) + "_q" + fmt17(v.q) +
                                ".csv"))
              .string();
      export_csv(trace, csv);
      labels.push_back(v.label);
      traces.push_back(std::move(trace));
    } catch (const std::exception& e) {
      entry["error"] = e.what();
    }
    section.push_back(entry);
  }
  std::vector<std::pair<std::string, const RunTrace*>> plot;
  for (std::size_t i = 0; i < traces.size(); ++i)
    plot.emplace_back(labels[i], &traces[i]);
  if (!plot.empty()) {
    export_svg(plot, "t", "residual",
               (fs::path(out_dir) / "linreg_unit_rows_vs_iterations.svg").string());
    export_svg(plot, "grad_evals_cum", "residual",
               (fs::path(out_dir) / "linreg_unit_rows_vs_grad_evals.svg").string());
    export_svg(plot, "comm_entries_cum", "residual",
               (fs::path(out_dir) / "linreg_unit_rows_vs_comm.svg").string());
  }
  return section;
}

}  // namespace

int run_reproduce_suite(const std::string& suite, const std::string& out_dir,
                        std::uint64_t seed) {
  if (suite != "consensus" && suite != "linreg" && suite != "all")
    throw ConfigError("unknown suite: " + suite +
                      " (expected consensus, linreg, or all)");
  const auto started = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  json summary;
  summary["suite"] = suite;
  summary["seed"] = seed;
  summary["absent_series"] = json::array(
      {"quantized push-sum baselines (external codebases, not reimplemented)",
       "push-based full-gradient baselines (external codebases, not reimplemented)"});
  if (suite == "consensus" || suite == "all")
    summary["consensus"] = reproduce_consensus(out_dir, seed);
  if (suite == "linreg" || suite == "all") {
    summary["linreg"] = reproduce_linreg_rowsum(out_dir, seed);
    summary["linreg_unit_rows"] = reproduce_linreg_unit_rows(out_dir, seed);
  }
  summary["duration_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  std::ofstream out(fs::path(out_dir) / "reproduce_summary.json");
  out << summary.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// CLI
// ---------------------------------------------------------------------------

namespace {

std::string resolve_out_dir(const std::string& flag_value,
                            const std::string& config_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("DCSOPT_OUT"); env && *env) return env;
  return config_value;
}

int run_config_command(const std::string& command, const std::string& config_path,
                       std::uint64_t seed_override, bool seed_given,
                       const std::string& out_override) {
  ExperimentConfig cfg = ExperimentConfig::from_json_file(config_path);
  const std::string want =
      command == "optimize" ? kind_name(cfg.kind) : command;
  if (command == "optimize") {
    if (cfg.kind != ExperimentKind::linreg && cfg.kind != ExperimentKind::logreg)
      throw ConfigError("optimize expects a linreg or logreg config");
  } else if (kind_name(cfg.kind) != want) {
    throw ConfigError("config experiment kind '" + kind_name(cfg.kind) +
                      "' does not match subcommand '" + command + "'");
  }
  if (seed_given) cfg.seed = seed_override;
  cfg.out_dir = resolve_out_dir(out_override, cfg.out_dir);

  ExperimentResult result = run_experiment(cfg);
  for (const auto& path : result.csv_paths) std::printf("%s\n", path.c_str());
  if (!result.summary.empty()) std::printf("%s\n", result.summary.c_str());
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Simulation engine for communication-sparsified decentralized "
               "optimization over time-varying directed graphs"};
  app.require_subcommand(1);

  std::string config_path, out_dir, suite = "all";
  std::uint64_t seed = 0;
  bool seed_given = false;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config)
      sub->add_option("--config", config_path, "JSON experiment config")->required();
    sub->add_option("--seed", seed, "override the config seed")
        ->each([&](const std::string&) { seed_given = true; });
    sub->add_option("--out", out_dir, "override the output directory");
  };

  CLI::App* consensus = app.add_subcommand("consensus", "run the consensus engine");
  CLI::App* optimize = app.add_subcommand("optimize", "run an optimizing engine");
  CLI::App* spectra = app.add_subcommand(
      "spectra", "per-window eigenvalue diagnostics of the mixing products");
  CLI::App* theory = app.add_subcommand(
      "theory", "rate constants, norm certificates, and recursion checks");
  CLI::App* reproduce =
      app.add_subcommand("reproduce", "run the bundled study configurations");
  for (CLI::App* sub : {consensus, optimize, spectra, theory})
    add_common(sub, true);
  add_common(reproduce, false);
  reproduce->add_option("--suite", suite, "consensus, linreg, or all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    std::fprintf(stderr, "%s", app.help().c_str());
    return 1;
  }

  try {
    if (reproduce->parsed()) {
      const std::string dir = resolve_out_dir(out_dir, "reproduce_out");
      run_reproduce_suite(suite, dir, seed_given ? seed : 1);
      std::printf("%s\n", (fs::path(dir) / "reproduce_summary.json").string().c_str());
      return 0;
    }
    for (CLI::App* sub : {consensus, optimize, spectra, theory})
      if (sub->parsed())
        return run_config_command(sub->get_name(), config_path, seed, seed_given,
                                  out_dir);
    return 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

}  // namespace dcs
