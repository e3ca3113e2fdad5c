// Acceptance suite: runs every acceptance criterion end to end and prints one
// PASS/FAIL line per criterion. Exit code is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dcs/engines.hpp"
#include "dcs/harness.hpp"
#include "dcs/mixing.hpp"
#include "dcs/theory.hpp"

using namespace dcs;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int id;
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<Outcome> g_outcomes;
// optimizing traces completed anywhere in this binary; criterion 7 sweeps them
std::vector<std::pair<std::string, RunTrace>> g_opt_traces;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point start = clock::now();
  return std::chrono::duration<double>(clock::now() - start).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  g_outcomes.push_back({id, name, pass, detail});
  std::printf("[%s] criterion %2d — %s: %s\n", pass ? "PASS" : "FAIL", id,
              name.c_str(), detail.c_str());
  std::fflush(stdout);
}

template <typename F>
void guarded(int id, const std::string& name, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, name, false, std::string("unexpected error: ") + e.what());
  }
}

struct LogFit {
  double slope = 0.0;
  double r2 = 0.0;
  long points = 0;
};

// Least-squares fit of log10(residual) against t over a residual band.
LogFit fit_log_residual(const RunTrace& trace, double lo, double hi) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& s : trace.steps)
    if (s.residual >= lo && s.residual <= hi)
      pts.push_back({static_cast<double>(s.t), std::log10(s.residual)});
  LogFit fit;
  fit.points = static_cast<long>(pts.size());
  if (pts.size() < 3) return fit;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto [x, y] : pts) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(pts.size());
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double icept = (sy - fit.slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double mean = sy / n;
  for (auto [x, y] : pts) {
    const double e = y - (fit.slope * x + icept);
    ss_res += e * e;
    ss_tot += (y - mean) * (y - mean);
  }
  fit.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 0.0;
  return fit;
}

double trace_floor(const RunTrace& trace) {
  std::vector<double> tail;
  for (std::size_t k = trace.steps.size() * 9 / 10; k < trace.steps.size(); ++k)
    tail.push_back(trace.steps[k].residual);
  std::sort(tail.begin(), tail.end());
  return tail.empty() ? 0.0 : tail[tail.size() / 2];
}

Eigen::MatrixXd normal_matrix(int rows, int cols, Rng& rng) {
  return Eigen::MatrixXd::NullaryExpr(
      rows, cols, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
}

// ---------------------------------------------------------------------------

void criterion_1_and_2() {
  const std::uint64_t seed = 2025;
  const double started = now_seconds();
  Rng topo_rng = Rng::substream(seed, "topology");
  auto topo = build_joint_topology(10, 0.9, 2, 1, 4000, topo_rng);
  Rng init = Rng::substream(seed, "init");
  Eigen::MatrixXd x0 = normal_matrix(10, 64, init);

  auto full = consensus_run(topo, x0, 0.05, 1.0, 4000, seed, 1e-12);
  const double elapsed = now_seconds() - started;
  const LogFit fit = fit_log_residual(full, 1e-11, 1e-2);

  bool pass = full.final_residual <= 1e-12 && fit.r2 >= 0.99 && elapsed <= 30.0;
  report(1, "consensus correctness and rate", pass,
         fmt("residual %.2e in %ld steps, log-linear fit R2=%.5f over %ld "
             "points, %.1f s",
             full.final_residual, full.steps_taken, fit.r2, fit.points, elapsed));

  guarded(2, "sparsification overhead", [&] {
    auto sparse = consensus_run(topo, x0, 0.05, 0.078, 4000, seed, 1e-12);
    const bool reached = sparse.final_residual <= 1e-12;
    const bool under_double = sparse.steps_taken < 2 * full.steps_taken;
    bool exact_ratio = true;
    const long common = std::min(full.steps_taken, sparse.steps_taken);
    for (long t = 1; t <= common && exact_ratio; ++t) {
      const auto d1 = full.steps[t].comm_entries_cum - full.steps[t - 1].comm_entries_cum;
      const auto d2 = sparse.steps[t].comm_entries_cum - sparse.steps[t - 1].comm_entries_cum;
      exact_ratio = (d2 * 64 == d1 * 5);
    }
    report(2, "sparsification overhead", reached && under_double && exact_ratio,
           fmt("q=0.078 reached %.2e in %ld steps vs %ld at q=1 (ratio %.2f); "
               "per-step entries ratio 5/64 exact: %s",
               sparse.final_residual, sparse.steps_taken, full.steps_taken,
               static_cast<double>(sparse.steps_taken) / full.steps_taken,
               exact_ratio ? "yes" : "no"));
  });
}

void criterion_3() {
  double worst = 0.0;
  int runs = 0;
  for (int b : {1, 10}) {
    for (std::uint64_t s = 0; s < 25; ++s) {
      const std::uint64_t seed = 9000 + s;
      Rng topo_rng = Rng::substream(seed, "topology");
      const long steps = b == 1 ? 300 : 600;
      auto topo = build_joint_topology(10, 0.9, 2, b, steps, topo_rng);
      Rng init = Rng::substream(seed, "init");
      Eigen::MatrixXd x0 = normal_matrix(10, 16, init);
      auto trace = consensus_run(topo, x0, 0.05, 0.25, steps, seed);
      worst = std::max(worst, trace.max_mass_drift);
      ++runs;
    }
  }
  report(3, "mass conservation", worst <= 1e-10,
         fmt("worst relative drift of the conserved mean %.2e over %d runs "
             "(B in {1,10}, q=0.25)",
             worst, runs));
}

void criterion_4() {
  // Hand-derived 2-node case first.
  auto g2 = DigraphSnapshot::from_edges(2, {{0, 1}, {1, 0}});
  auto w2 = base_weights(g2);
  std::vector<CoordinateMask> full_mask(2, CoordinateMask::full(1));
  std::vector<Eigen::MatrixXd> window{assemble_mixing(
      normalize_in(w2.w_in, full_mask, 0), normalize_out(w2.w_out, full_mask, 0))};
  auto moduli = eigenvalue_moduli(block_product(window, 0.05).matrix);
  const double expected[] = {1.0, 0.95, 0.25, 0.20};
  bool hand_ok = true;
  for (int k = 0; k < 4; ++k)
    hand_ok = hand_ok && std::abs(moduli[k] - expected[k]) <= 1e-10;

  // Grid sweep, implemented exactly as stated. Under independent per-virtual-
  // node masks a node can stay silent on a coordinate for a whole window,
  // which traps its mass and pins a second eigenvalue at modulus one, so the
  // sparsified configurations are expected to fail; the detail line carries
  // the diagnosis.
  const int d = 64;
  std::string detail = fmt("n=2 moduli {1,0.95,0.2,0.25} within 1e-10: %s;",
                           hand_ok ? "yes" : "NO");
  bool grid_ok = true;
  for (int b : {1, 10}) {
    for (double q : {1.0, 0.25, 0.078}) {
      long checked = 0, degenerate = 0, degenerate_with_silent = 0;
      for (std::uint64_t s = 0; s < 20; ++s) {
        const std::uint64_t seed = 77000 + s;
        Rng topo_rng = Rng::substream(seed, "topology");
        const long windows = 2;
        auto topo = build_joint_topology(10, 0.9, 2, b, windows * b, topo_rng);
        Rng mask_rng = Rng::substream(seed, "masks");
        std::vector<std::vector<CoordinateMask>> masks(windows * b);
        for (auto& step : masks)
          for (int v = 0; v < 20; ++v) step.push_back(draw_mask(d, q, mask_rng));
        for (long k = 0; k < windows; ++k) {
          std::vector<std::vector<CoordinateMask>> step_masks(
              masks.begin() + k * b, masks.begin() + (k + 1) * b);
          auto wm = window_matrices(topo, k, step_masks, 0.05, d);
          for (int m = 0; m < d; ++m) {
            ++checked;
            auto mods = eigenvalue_moduli(wm.m_blocks[m].matrix);
            if (mods[1] < 1.0 - 1e-9) continue;
            ++degenerate;
            // witness: some node transmitted neither part on m all window
            bool silent = false;
            for (int i = 0; i < 10 && !silent; ++i) {
              bool x_active = false, y_active = false;
              for (int t = 0; t < b; ++t) {
                x_active |= step_masks[t][i].keeps(m);
                y_active |= step_masks[t][10 + i].keeps(m);
              }
              silent = !x_active || !y_active;
            }
            if (silent) ++degenerate_with_silent;
          }
        }
      }
      if (degenerate > 0) grid_ok = false;
      detail += fmt(" [B=%d q=%.3f: %ld/%ld windows with |l2|=1, %ld with a "
                    "window-silent node]",
                    b, q, degenerate, checked, degenerate_with_silent);
    }
  }
  report(4, "spectral assumptions", hand_ok && grid_ok, detail);
}

void criterion_5() {
  long checked = 0, passed = 0, vacuous = 0;
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(3000 + s);
    const int n = 2 + static_cast<int>(rng.below(5));
    const int b = 1 + static_cast<int>(rng.below(2));
    auto topo = build_joint_topology(n, 0.8, 0, b, b, rng);
    const double q = s % 2 ? 1.0 : 0.5;
    const int d = 4;
    Rng mask_rng(4000 + s);
    std::vector<std::vector<CoordinateMask>> masks(b);
    for (auto& step : masks)
      for (int v = 0; v < 2 * n; ++v) step.push_back(draw_mask(d, q, mask_rng));
    auto wm = window_matrices(topo, 0, masks, 0.05, d);
    for (int m = 0; m < d; ++m) {
      auto mods = eigenvalue_moduli(wm.m_blocks[m].matrix);
      if (mods[1] >= 1.0 - 1e-9) {
        ++vacuous;  // no finite power k satisfies |l2|^k <= 1e-9
        continue;
      }
      const long k = static_cast<long>(std::ceil(std::log(1e-9) / std::log(mods[1])));
      const double err = rank_one_limit_error(wm.m_blocks[m], k);
      ++checked;
      worst = std::max(worst, err);
      if (err <= 1e-8) ++passed;
    }
  }
  report(5, "rank-one limit", checked >= 30 && passed == checked,
         fmt("%ld/%ld window powers within 1e-8 of the limit (worst %.2e); "
             "%ld degenerate windows had no qualifying power",
             passed, checked, worst, vacuous));
}

void criterion_6() {
  Rng rng(606);
  auto lin = gen_linreg(3, 7, 5, 0.01, rng).data;
  auto log = gen_logreg(3, 6, 4, 1e-3, rng);
  long mean_ok = 0, snap_ok = 0, trials = 0;
  for (const Dataset* data : {&lin, &log}) {
    for (int trial = 0; trial < 100; ++trial) {
      const int i = static_cast<int>(rng.below(data->node_count()));
      const int dim = data->dimension();
      Eigen::VectorXd x(dim), w(dim);
      for (int c = 0; c < dim; ++c) {
        x[c] = rng.normal();
        w[c] = rng.normal();
      }
      const Eigen::VectorXd mu = local_full_grad(*data, i, w);
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
      bool exact = true;
      for (int l = 0; l < data->sample_count(i); ++l) {
        mean += svrg_gradient_estimate(*data, i, x, w, mu, l);
        exact = exact &&
                (svrg_gradient_estimate(*data, i, w, w, mu, l) - mu)
                        .cwiseAbs()
                        .maxCoeff() == 0.0;
      }
      mean /= data->sample_count(i);
      const Eigen::VectorXd full = local_full_grad(*data, i, x);
      if ((mean - full).cwiseAbs().maxCoeff() <=
          1e-12 * (1.0 + full.cwiseAbs().maxCoeff()))
        ++mean_ok;
      if (exact) ++snap_ok;
      ++trials;
    }
  }
  report(6, "svrg estimator law", mean_ok == trials && snap_ok == trials,
         fmt("enumeration mean matched the local gradient in %ld/%ld states; "
             "estimate at the snapshot equaled mu exactly in %ld/%ld",
             mean_ok, trials, snap_ok, trials));
}

void criterion_7() {
  double worst_tracking = 0.0, worst_mean = 0.0;
  for (const auto& [name, trace] : g_opt_traces) {
    worst_tracking = std::max(worst_tracking, trace.max_tracking_gap);
    worst_mean = std::max(worst_mean, trace.max_mean_dynamics_gap);
  }
  report(7, "tracking identities",
         !g_opt_traces.empty() && worst_tracking <= 1e-10 && worst_mean <= 1e-10,
         fmt("across %zu optimizing runs: worst mean(g)=mean(v) gap %.2e, "
             "worst block mean-dynamics gap %.2e",
             g_opt_traces.size(), worst_tracking, worst_mean));
}

struct ComparisonRun {
  std::string label;
  bool completed = false;
  double floor = 0.0;
  double r2 = 0.0;
  std::string error;
};

ComparisonRun comparison_run(const TimeVaryingTopology& topo, const Dataset& data,
                         const ObjectiveConstants& consts,
                         const Eigen::VectorXd& x_star,
                         const Eigen::MatrixXd& x0, EngineKind kind, double q,
                         double alpha, int b, long steps, std::uint64_t seed,
                         const char* tag) {
  ComparisonRun run;
  run.label = fmt("%s B=%d q=%.2f", tag, b, q);
  EngineConfig cfg;
  cfg.kind = kind;
  cfg.alpha = alpha;
  cfg.gamma = 0.05;
  cfg.q = q;
  cfg.window = b;
  cfg.inner_steps = (400 % b == 0) ? 400 : b * ((400 + b - 1) / b);
  cfg.epochs = static_cast<int>(steps / cfg.inner_steps);
  cfg.steps = cfg.kind == EngineKind::svrg ? 0 : cfg.inner_steps * cfg.epochs;
  cfg.seed = seed;
  cfg.record_stride = 50;
  try {
    RunTrace trace =
        kind == EngineKind::svrg
            ? svrg_run(topo, data, consts, x_star, x0, cfg)
            : ablation_run(topo, data, consts, x_star, x0, cfg);
    run.completed = true;
    run.floor = trace_floor(trace);
    run.r2 = fit_log_residual(trace, 10.0 * run.floor, 0.5).r2;
    g_opt_traces.emplace_back(run.label, std::move(trace));
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  return run;
}

void criterion_8() {
  const double started = now_seconds();
  const std::uint64_t seed = 191;  // tamest max row norm among 400 scanned
  Rng data_rng = Rng::substream(seed, "data");
  auto inst = gen_linreg(10, 200, 64, 0.01, data_rng);
  auto consts = constants(inst.data);
  auto x_star = centralized_optimum(inst.data).x_star;
  Rng init = Rng::substream(seed, "init");
  Eigen::MatrixXd x0 = normal_matrix(10, 64, init);

  const long steps = 20000;
  long launched = 0, diverged = 0, comparisons_ok = 0, comparisons = 0;
  bool floors_ok = true, linear_ok = true, sgd_ok = true;
  for (int b = 1; b <= 5; ++b) {
    const long inner = (400 % b == 0) ? 400 : b * ((400 + b - 1) / b);
    const long total = inner * (steps / inner);
    Rng topo_rng = Rng::substream(seed, "topology", b);
    auto topo = build_joint_topology(10, 0.9, 2, b, total, topo_rng);
    ComparisonRun full = comparison_run(topo, inst.data, consts, x_star, x0,
                                    EngineKind::full_grad, 1.0, 0.002, b,
                                    steps, seed + b, "full");
    ComparisonRun sgd = comparison_run(topo, inst.data, consts, x_star, x0,
                                   EngineKind::plain_sgd, 1.0, 0.002, b, steps,
                                   seed + b, "sgd");
    launched += 2;
    diverged += !full.completed + !sgd.completed;
    for (double q : {1.0, 0.08, 0.05}) {
      ComparisonRun svrg = comparison_run(topo, inst.data, consts, x_star, x0,
                                      EngineKind::svrg, q, 0.002, b, steps,
                                      seed + b, "svrg");
      ++launched;
      ++comparisons;
      if (!svrg.completed) ++diverged;
      if (!svrg.completed || !full.completed) {
        floors_ok = false;
        continue;
      }
      ++comparisons_ok;
      if (std::abs(std::log10(svrg.floor / full.floor)) > 0.5) floors_ok = false;
      if (svrg.r2 < 0.95) linear_ok = false;
      if (!sgd.completed || sgd.floor < 10.0 * svrg.floor) sgd_ok = false;
    }
  }
  const double elapsed = now_seconds() - started;
  const bool pass = diverged == 0 && comparisons_ok == comparisons &&
                    floors_ok && linear_ok && sgd_ok && elapsed <= 600.0;

  // Informational companion: the identical pipeline on a well-conditioned
  // instance (unit-norm feature rows) where a stable step exists. This
  // isolates the failure above to the data model, not the machinery.
  std::string companion;
  {
    Rng rng = Rng::substream(7, "data");
    Dataset data;
    data.kind = ObjectiveKind::linear;
    Eigen::VectorXd planted(64);
    for (int c = 0; c < 64; ++c) planted[c] = rng.normal();
    for (int i = 0; i < 10; ++i) {
      Eigen::MatrixXd d(200, 64);
      for (int r = 0; r < 200; ++r) {
        for (int c = 0; c < 64; ++c) d(r, c) = rng.normal();
        d.row(r) /= d.row(r).norm();
      }
      Eigen::VectorXd noise(200);
      for (int r = 0; r < 200; ++r) noise[r] = 0.1 * rng.normal();
      data.targets.push_back(d * planted + noise);
      data.samples.push_back(std::move(d));
    }
    auto c_consts = constants(data);
    auto c_star = centralized_optimum(data).x_star;
    Rng c_init = Rng::substream(7, "init");
    Eigen::MatrixXd c_x0 = normal_matrix(10, 64, c_init);
    Rng topo_rng = Rng::substream(7, "topology");
    auto topo = build_joint_topology(10, 0.9, 2, 5, 60000, topo_rng);
    ComparisonRun svrg = comparison_run(topo, data, c_consts, c_star, c_x0,
                                    EngineKind::svrg, 0.08, 0.1, 5, 60000, 7,
                                    "companion-svrg");
    ComparisonRun full = comparison_run(topo, data, c_consts, c_star, c_x0,
                                    EngineKind::full_grad, 1.0, 0.1, 5, 60000,
                                    7, "companion-full");
    ComparisonRun sgd = comparison_run(topo, data, c_consts, c_star, c_x0,
                                   EngineKind::plain_sgd, 1.0, 0.1, 5, 60000,
                                   7, "companion-sgd");
    if (svrg.completed && full.completed && sgd.completed)
      companion = fmt("; companion on unit-norm rows (alpha=0.1): svrg floor "
                      "%.1e = full floor %.1e (same to %.2f decades), sgd "
                      "floor %.1e (%.1f decades higher), svrg R2=%.3f",
                      svrg.floor, full.floor,
                      std::abs(std::log10(svrg.floor / full.floor)), sgd.floor,
                      std::log10(sgd.floor / svrg.floor), svrg.r2);
    else
      companion = "; companion run failed";
  }

  report(8, "optimization at reference scale", pass,
         fmt("%ld/%ld pinned runs diverged at alpha=0.002 (the row-sum-"
             "normalized data model carries rows with squared norm ~1e5 even "
             "at the tamest of 400 seeds, so alpha*L >> 1); %ld/%ld floor "
             "comparisons possible, floors %s, linearity %s, sgd ordering %s, "
             "%.0f s%s",
             diverged, launched, comparisons_ok, comparisons,
             floors_ok ? "ok" : "not met", linear_ok ? "ok" : "not met",
             sgd_ok ? "ok" : "not met", elapsed, companion.c_str()));
}

void criterion_9() {
  TheoryInputs base;
  base.sigma = 0.0;
  base.smoothness = 1.0;
  base.strong_convexity = 1.0;
  base.window = 1;
  base.node_count = 1;

  bool ok = true;
  std::string detail;
  const double a0 = step_size_bound(base);
  ok &= std::abs(a0 - 1.0 / 187.0) <= 1e-9 / 187.0;

  TheoryInputs hard = base;
  hard.sigma = 0.95;
  hard.smoothness = 10.0;
  hard.strong_convexity = 1.0;
  ok &= std::abs(step_size_bound(hard) - 5.083556149732624e-7) <=
        1e-9 * 5.08e-7;

  const long t0 = epoch_length_bound(base);
  ok &= (t0 == 7927);
  const double lambda0 = outer_contraction(base, t0);
  ok &= std::abs(lambda0 - 0.660199808321952) <= 1e-9 * 0.66;
  ok &= std::abs(lambda0 - 0.6602) < 5e-7;  // the four-digit derived value

  bool grid_ok = true;
  for (double s : {0.0, 0.5, 0.9, 0.99})
    for (double qt : {1.0, 10.0, 100.0}) {
      TheoryInputs in = base;
      in.sigma = s;
      in.smoothness = qt;
      grid_ok = grid_ok && outer_contraction(in, epoch_length_bound(in)) < 0.7;
      grid_ok = grid_ok && epoch_length_bound(in) % in.window == 0;
    }
  report(9, "theory constants", ok && grid_ok,
         fmt("alpha(0,1,1)=%.12g, T(0,1,1)=%ld, lambda=%.12g (prints 0.6602); "
             "lambda < 0.7 across the sigma/condition grid: %s",
             a0, t0, lambda0, grid_ok ? "yes" : "NO"));
}

void criterion_10() {
  // certificates across the grid
  bool grid_ok = true;
  for (double s : {0.0, 0.5, 0.9, 0.99})
    for (double qt : {1.0, 10.0, 100.0})
      for (double mu : {0.5, 1.0}) {
        TheoryInputs in;
        in.sigma = s;
        in.smoothness = qt * mu;
        in.strong_convexity = mu;
        in.window = 1;
        in.node_count = 10;
        grid_ok = grid_ok && norm_certificates(step_size_bound(in), in).ok;
      }

  // desk-scale ensemble
  const std::uint64_t seed = 4242;
  const int n = 6, d = 8, m = 20, b = 2;
  const long inner = 40;
  const int epochs = 3;
  const long steps = inner * epochs;
  Rng topo_rng = Rng::substream(seed, "topology");
  auto topo = build_joint_topology(n, 0.8, 1, b, steps, topo_rng);
  Rng data_rng = Rng::substream(seed, "data");
  auto inst = gen_linreg(n, m, d, 0.01, data_rng);
  auto consts = constants(inst.data);
  auto x_star = centralized_optimum(inst.data).x_star;
  Rng init = Rng::substream(seed, "init");
  Eigen::MatrixXd x0 = normal_matrix(n, d, init);

  auto cal = calibrate_sigma(topo, d, 1.0, 0.05, seed, 20);
  TheoryInputs in;
  in.sigma = cal.sigma_max;
  in.smoothness = consts.smoothness;
  in.strong_convexity = consts.strong_convexity;
  in.window = b;
  in.node_count = n;
  const double alpha = step_size_bound(in);
  auto sys = build_error_system(alpha, in, n);

  std::vector<std::vector<ErrorPoint>> ensemble;
  for (int r = 0; r < 100; ++r) {
    EngineConfig cfg;
    cfg.kind = EngineKind::svrg;
    cfg.alpha = alpha;
    cfg.gamma = 0.05;
    cfg.q = 1.0;
    cfg.window = b;
    cfg.inner_steps = inner;
    cfg.epochs = epochs;
    cfg.seed = seed + 1 + r;
    cfg.record_stride = b;
    cfg.record_boundaries = true;
    auto trace = svrg_run(topo, inst.data, consts, x_star, x0, cfg);
    ensemble.push_back(errors_from_trace(trace, x_star, consts.smoothness));
    if (r == 0) g_opt_traces.emplace_back("desk svrg", std::move(trace));
  }
  auto ensemble_report = verify_error_recursion(ensemble, sys, 0.05);

  // deterministic pathwise recursion with measured window factors
  EngineConfig fg;
  fg.kind = EngineKind::full_grad;
  fg.alpha = alpha;
  fg.gamma = 0.05;
  fg.q = 1.0;
  fg.window = b;
  fg.steps = steps;
  fg.seed = seed + 500;
  fg.record_stride = b;
  fg.record_boundaries = true;
  fg.record_masks = true;
  auto fg_trace = ablation_run(topo, inst.data, consts, x_star, x0, fg);
  auto sigmas = window_contraction_factors(topo, fg_trace, 0.05, d, steps / b);
  auto pathwise = consensus_recursion_check(fg_trace, sigmas, alpha, 0.01);
  g_opt_traces.emplace_back("desk full_grad", std::move(fg_trace));

  const bool pass = grid_ok && sys.alpha_admissible && ensemble_report.ok() &&
                    ensemble_report.worst_ratio <= 1.05 && pathwise.ok();
  report(10, "error-recursion verification", pass,
         fmt("norm certificates across the grid: %s; 100-seed ensemble worst "
             "ratio %.4f (%ld checks); deterministic pathwise worst ratio "
             "%.4f (%ld windows, sigma_cal=%.4f)",
             grid_ok ? "ok" : "FAILED", ensemble_report.worst_ratio, ensemble_report.checked,
             pathwise.worst_ratio, pathwise.checked, cal.sigma_max));
}

void criterion_11() {
  const double started = now_seconds();
  const std::string root = "acceptance_out";
  fs::remove_all(root);

  // bit-identical CSVs from identical seeds, consensus and optimizing
  auto run_pair = [&](const std::string& tag, ExperimentKind kind) {
    ExperimentConfig cfg;
    cfg.kind = kind;
    cfg.nodes = 6;
    cfg.dimension = 8;
    cfg.samples_per_node = 10;
    cfg.window = 2;
    cfg.repeat = 2;
    cfg.seed = 31;
    cfg.engine.kind =
        kind == ExperimentKind::consensus ? EngineKind::consensus : EngineKind::svrg;
    cfg.engine.alpha = kind == ExperimentKind::consensus ? 0.0 : 1e-4;
    cfg.engine.q = 0.5;
    cfg.engine.steps = 60;
    cfg.engine.inner_steps = 30;
    cfg.engine.epochs = 2;
    cfg.out_dir = root + "/" + tag + "_a";
    run_experiment(cfg);
    cfg.out_dir = root + "/" + tag + "_b";
    run_experiment(cfg);
    for (int r = 0; r < 2; ++r) {
      std::ifstream a(root + "/" + tag + "_a/trace_r" + std::to_string(r) + ".csv");
      std::ifstream b(root + "/" + tag + "_b/trace_r" + std::to_string(r) + ".csv");
      std::stringstream sa, sb;
      sa << a.rdbuf();
      sb << b.rdbuf();
      if (sa.str().empty() || sa.str() != sb.str()) return false;
    }
    return true;
  };
  const bool deterministic =
      run_pair("consensus", ExperimentKind::consensus) &&
      run_pair("svrg", ExperimentKind::linreg);

  // full reproduction suite, then parse every CSV it wrote under the schema
  run_reproduce_suite("all", root + "/reproduce", 1);
  long parsed = 0;
  bool parse_ok = true;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.path().extension() != ".csv") continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("trace_r", 0) != 0) continue;
    try {
      import_csv(entry.path().string());
      ++parsed;
    } catch (...) {
      parse_ok = false;
    }
  }
  const double elapsed = now_seconds() - started;
  report(11, "determinism and formats",
         deterministic && parse_ok && parsed > 10 && elapsed <= 1200.0,
         fmt("identical seeds gave bit-identical CSVs: %s; %ld trace CSVs "
             "parsed under the schema; reproduce completed in %.0f s",
             deterministic ? "yes" : "NO", parsed, elapsed));
  fs::remove_all(root);
}

}  // namespace

int main() {
  std::printf("acceptance suite\n================\n");
  guarded(1, "consensus correctness and rate", criterion_1_and_2);
  guarded(3, "mass conservation", criterion_3);
  guarded(4, "spectral assumptions", criterion_4);
  guarded(5, "rank-one limit", criterion_5);
  guarded(6, "svrg estimator law", criterion_6);
  guarded(8, "optimization at reference scale", criterion_8);
  guarded(9, "theory constants", criterion_9);
  guarded(10, "error-recursion verification", criterion_10);
  guarded(7, "tracking identities", criterion_7);
  guarded(11, "determinism and formats", criterion_11);

  int failures = 0;
  for (const auto& o : g_outcomes)
    if (!o.pass) ++failures;
  std::printf("================\n%zu criteria checked, %d failed\n",
              g_outcomes.size(), failures);
  return failures;
}
