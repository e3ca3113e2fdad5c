#include "dcs/engines.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "dcs/mixing.hpp"

namespace dcs {

Eigen::VectorXd svrg_gradient_estimate(const Dataset& data, int node,
                                       const Eigen::VectorXd& x_block_start,
                                       const Eigen::VectorXd& w_snapshot,
                                       const Eigen::VectorXd& mu_full,
                                       int sample) {
  return component_grad(data, node, sample, x_block_start) -
         component_grad(data, node, sample, w_snapshot) + mu_full;
}

Eigen::MatrixXd gradient_tracking_update(
    const Eigen::MatrixXd& g_prev,
    std::span<const Eigen::MatrixXd> b_products, const Eigen::MatrixXd& v_new,
    const Eigen::MatrixXd& v_old) {
  const int d = static_cast<int>(g_prev.cols());
  if (static_cast<int>(b_products.size()) != d)
    throw std::invalid_argument("gradient_tracking_update: need one product per coordinate");
  Eigen::MatrixXd g_new(g_prev.rows(), d);
  for (int m = 0; m < d; ++m)
    g_new.col(m) = b_products[m] * g_prev.col(m);
  return g_new + v_new - v_old;
}

namespace {

struct Validated {
  long steps;
};

Validated validate(const TimeVaryingTopology& topology,
                   const Eigen::MatrixXd& x0, const EngineConfig& config) {
  if (topology.node_count != x0.rows())
    throw std::invalid_argument("engine: x0 rows must match node count");
  if (config.gamma <= 0.0 || config.gamma >= 1.0)
    throw std::invalid_argument("engine: gamma must lie in (0, 1)");
  if (config.q <= 0.0 || config.q > 1.0)
    throw std::invalid_argument("engine: q must lie in (0, 1]");
  if (config.window != topology.window)
    throw std::invalid_argument("engine: config window differs from topology window");
  if (config.kind == EngineKind::svrg) {
    if (config.inner_steps <= 0 || config.inner_steps % config.window != 0)
      throw std::invalid_argument("engine: inner_steps must be a positive multiple of the window");
    if (config.epochs <= 0) throw std::invalid_argument("engine: epochs must be positive");
  }
  if (config.kind != EngineKind::consensus && config.alpha <= 0.0)
    throw std::invalid_argument("engine: alpha must be positive");
  const long steps = config.total_steps();
  if (steps <= 0) throw std::invalid_argument("engine: nothing to run");
  if (steps > topology.horizon())
    throw std::runtime_error("engine: topology horizon exhausted");
  return Validated{steps};
}

// Runs the surplus-consensus recursion and, for the optimizing kinds, the
// tracked-gradient machinery on top of it. One instance per run.
class SurplusEngine {
 public:
  SurplusEngine(const TimeVaryingTopology& topology, const Eigen::MatrixXd& x0,
                const EngineConfig& config, const Dataset* data,
                const ObjectiveConstants* consts, const Eigen::VectorXd* x_star)
      : topo_(topology),
        cfg_(config),
        data_(data),
        n_(topology.node_count),
        d_(static_cast<int>(x0.cols())),
        optimizing_(config.kind != EngineKind::consensus),
        mask_rng_(Rng::substream(config.seed, "masks")),
        sample_rng_(Rng::substream(config.seed, "samples")),
        x_(x0),
        y_(Eigen::MatrixXd::Zero(topology.node_count, x0.cols())) {
    steps_ = validate(topology, x0, config).steps;

    if (optimizing_) {
      smoothness_ = consts->smoothness;
      target_ = *x_star;
      w_ = x_;
      mu_ = Eigen::MatrixXd(n_, d_);
      for (int i = 0; i < n_; ++i) mu_.row(i) = local_full_grad(*data_, i, x_.row(i).transpose()).transpose();
      v_ = mu_;
      g_ = mu_;
      g_run_ = mu_;
      grad_evals_ += static_cast<double>(data_->total_samples());
    } else {
      target_ = x_.colwise().mean().transpose();
    }

    y_stored_ = y_;
    x_block_ = x_;
    initial_mean_ = column_means();
    mean_scale_ = std::max(initial_mean_.cwiseAbs().maxCoeff(), 1e-12);
    residual_denom_ = stacked_distance();
    z_mean_prev_block_ = initial_mean_;
    if (optimizing_) v_mean_prev_block_ = v_.colwise().mean().transpose();

    if (cfg_.cross_check) {
      x_alt_ = x_;
      y_alt_ = y_;
      y_alt_stored_ = y_;
    }
  }

  RunTrace run() {
    const auto started = std::chrono::steady_clock::now();
    record_step(0);
    maybe_record_boundary(0);
    bool stopped = false;
    for (long t = 0; t < steps_ && !stopped; ++t) {
      step(t);
      const long now = t + 1;
      const bool boundary = (now % cfg_.window == 0);
      const bool due = boundary || cfg_.record_stride <= 1 ||
                       now % cfg_.record_stride == 0 || now == steps_;
      double residual = 0.0;
      if (due) residual = record_step(now);
      if (boundary) maybe_record_boundary(now);
      if (due && cfg_.stop_residual > 0.0 && residual <= cfg_.stop_residual)
        stopped = true;
    }
    trace_.steps_taken = trace_.steps.back().t;
    trace_.final_residual = trace_.steps.back().residual;
    trace_.comm_entries_total = comm_entries_;
    trace_.grad_evals_total = grad_evals_ / static_cast<double>(
        optimizing_ ? data_->total_samples() : 1);
    trace_.duration_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
            .count();
    return std::move(trace_);
  }

 private:
  Eigen::VectorXd column_means() const {
    return ((x_.colwise().sum() + y_.colwise().sum()) / n_).transpose();
  }

  double stacked_distance() const {
    double sq = 0.0;
    for (int i = 0; i < n_; ++i) sq += (x_.row(i).transpose() - target_).squaredNorm();
    return std::sqrt(sq);
  }

  void step(long t) {
    const DigraphSnapshot& snap = topo_.snapshots[t];
    const BaseWeights weights = base_weights(snap);
    const bool boundary = ((t + 1) % cfg_.window == 0);

    std::vector<CoordinateMask> masks;
    masks.reserve(2 * n_);
    for (int v = 0; v < 2 * n_; ++v) masks.push_back(draw_mask(d_, cfg_.q, mask_rng_));
    const std::vector<CoordinateMask> x_masks(masks.begin(), masks.begin() + n_);
    const std::vector<CoordinateMask> y_masks(masks.begin() + n_, masks.end());

    Eigen::MatrixXd x_next(n_, d_), y_next(n_, d_);
    Eigen::MatrixXd x_alt_next, y_alt_next;
    if (cfg_.cross_check) {
      x_alt_next.resize(n_, d_);
      y_alt_next.resize(n_, d_);
    }

    for (int m = 0; m < d_; ++m) {
      const Eigen::MatrixXd a_m = normalize_in(weights.w_in, x_masks, m);
      const Eigen::MatrixXd b_m = normalize_out(weights.w_out, y_masks, m);
      x_next.col(m).noalias() = a_m * x_.col(m);
      y_next.col(m) = x_.col(m) - x_next.col(m);
      y_next.col(m).noalias() += b_m * y_.col(m);
      if (optimizing_) g_run_.col(m) = b_m * g_run_.col(m);
      if (cfg_.cross_check) {
        // Element-wise form: the surplus recursion replaces the mixed state
        // terms with -(x^{t+1} - x^t).
        x_alt_next.col(m).noalias() = a_m * x_alt_.col(m);
        y_alt_next.col(m).noalias() = b_m * y_alt_.col(m);
      }
    }

    if (boundary) {
      x_next += cfg_.gamma * y_stored_;
      y_next -= cfg_.gamma * y_stored_;
      if (optimizing_) x_next -= cfg_.alpha * g_;
      if (cfg_.cross_check) x_alt_next += cfg_.gamma * y_alt_stored_;
      if (cfg_.cross_check && optimizing_) x_alt_next -= cfg_.alpha * g_;
    }
    if (cfg_.cross_check) {
      y_alt_next -= x_alt_next - x_alt_;
      x_alt_ = std::move(x_alt_next);
      y_alt_ = std::move(y_alt_next);
    }
    x_ = std::move(x_next);
    y_ = std::move(y_next);

    if (!(x_.allFinite() && y_.allFinite()))
      throw std::runtime_error(
          "engine: non-finite state at step " + std::to_string(t) +
          " (step size too large for this instance)");

    // Communication cost: every transmitting virtual node pays its kept
    // coordinate count once per out-neighbor; self delivery is local memory.
    std::uint64_t entries = 0;
    for (int i = 0; i < n_; ++i) {
      const std::uint64_t fanout = snap.out_neighbors[i].size() - 1;
      entries += fanout * static_cast<std::uint64_t>(x_masks[i].kept_size());
      entries += fanout * static_cast<std::uint64_t>(y_masks[i].kept_size());
      if (optimizing_)  // the tracked gradient travels under the y-mask
        entries += fanout * static_cast<std::uint64_t>(y_masks[i].kept_size());
    }
    comm_entries_ += entries;
    if (cfg_.record_masks) trace_.masks_per_step.push_back(std::move(masks));

    // The per-coordinate mean is conserved only when no gradient is applied;
    // optimizing engines move it by -alpha vbar per block, which the
    // mean-dynamics gap tracks instead.
    if (!optimizing_) track_mass_conservation();
    if (cfg_.cross_check) {
      const double div = std::max((x_ - x_alt_).cwiseAbs().maxCoeff(),
                                  (y_ - y_alt_).cwiseAbs().maxCoeff());
      trace_.elementwise_max_divergence =
          std::max(trace_.elementwise_max_divergence, div);
    }

    if (boundary) {
      if (optimizing_) boundary_gradient_update(t + 1);
      y_stored_ = y_;
      x_block_ = x_;
      if (cfg_.cross_check) y_alt_stored_ = y_alt_;
    }
  }

  void boundary_gradient_update(long now) {
    // The averages of g and v both live at the block start; check the
    // tracking identity and the mean dynamics before refreshing them. The
    // roundoff in the identity is proportional to the largest values the
    // running sums ever carried, so the gap is normalized by the peak scale.
    const Eigen::VectorXd g_mean = g_.colwise().mean().transpose();
    const Eigen::VectorXd v_mean = v_.colwise().mean().transpose();
    tracking_scale_ = std::max(
        {tracking_scale_, g_mean.cwiseAbs().maxCoeff(), v_mean.cwiseAbs().maxCoeff()});
    trace_.max_tracking_gap =
        std::max(trace_.max_tracking_gap,
                 (g_mean - v_mean).cwiseAbs().maxCoeff() / tracking_scale_);

    const Eigen::VectorXd z_mean = column_means();
    const Eigen::VectorXd predicted = z_mean_prev_block_ - cfg_.alpha * v_mean_prev_block_;
    const double z_scale = std::max(z_mean.cwiseAbs().maxCoeff(), 1.0);
    trace_.max_mean_dynamics_gap =
        std::max(trace_.max_mean_dynamics_gap,
                 (z_mean - predicted).cwiseAbs().maxCoeff() / z_scale);

    // New estimates are evaluated at the state the block started from.
    Eigen::MatrixXd v_new(n_, d_);
    for (int i = 0; i < n_; ++i) {
      const Eigen::VectorXd xi = x_block_.row(i).transpose();
      switch (cfg_.kind) {
        case EngineKind::svrg: {
          const int l = static_cast<int>(sample_rng_.below(data_->sample_count(i)));
          v_new.row(i) = svrg_gradient_estimate(*data_, i, xi,
                                                w_.row(i).transpose(),
                                                mu_.row(i).transpose(), l)
                             .transpose();
          grad_evals_ += 2.0;
          break;
        }
        case EngineKind::full_grad:
          v_new.row(i) = local_full_grad(*data_, i, xi).transpose();
          grad_evals_ += static_cast<double>(data_->sample_count(i));
          break;
        case EngineKind::plain_sgd: {
          const int l = static_cast<int>(sample_rng_.below(data_->sample_count(i)));
          v_new.row(i) = component_grad(*data_, i, l, xi).transpose();
          grad_evals_ += 1.0;
          break;
        }
        case EngineKind::consensus:
          break;
      }
    }
    g_run_ += v_new - v_;
    g_ = g_run_;
    v_ = std::move(v_new);

    z_mean_prev_block_ = column_means();
    v_mean_prev_block_ = v_.colwise().mean().transpose();

    if (cfg_.kind == EngineKind::svrg) {
      if (now % cfg_.inner_steps == 0 && now < steps_) {
        w_ = x_;
        for (int i = 0; i < n_; ++i)
          mu_.row(i) = local_full_grad(*data_, i, w_.row(i).transpose()).transpose();
        grad_evals_ += static_cast<double>(data_->total_samples());
      }
    } else {
      w_ = x_;  // ablations snapshot every block
    }
  }

  void track_mass_conservation() {
    const Eigen::VectorXd mean = column_means();
    for (int m = 0; m < d_; ++m) {
      const double denom = std::max(std::abs(initial_mean_[m]), 1e-6 * mean_scale_);
      trace_.max_mass_drift = std::max(
          trace_.max_mass_drift, std::abs(mean[m] - initial_mean_[m]) / denom);
    }
  }

  double record_step(long t) {
    StepRecord rec;
    rec.t = t;
    const double numer = stacked_distance();
    rec.residual = residual_denom_ > 0.0 ? numer / residual_denom_ : 0.0;

    const Eigen::VectorXd z_mean = column_means();
    double spread = 0.0;
    for (int i = 0; i < n_; ++i)
      spread += (x_.row(i).transpose() - z_mean).squaredNorm();
    rec.consensus_error = spread;
    rec.optimality_error = n_ * (z_mean - target_).squaredNorm();
    if (optimizing_) {
      const Eigen::VectorXd g_mean = g_.colwise().mean().transpose();
      double tracking = 0.0;
      for (int i = 0; i < n_; ++i)
        tracking += (g_.row(i).transpose() - g_mean).squaredNorm();
      rec.tracking_error = tracking / (smoothness_ * smoothness_);
    }
    rec.comm_entries_cum = comm_entries_;
    rec.grad_evals_cum =
        optimizing_ ? grad_evals_ / static_cast<double>(data_->total_samples()) : 0.0;
    trace_.steps.push_back(rec);
    return rec.residual;
  }

  void maybe_record_boundary(long t) {
    if (!cfg_.record_boundaries) return;
    BoundarySnapshot snap;
    snap.t = t;
    snap.z.resize(2 * n_, d_);
    snap.z.topRows(n_) = x_;
    snap.z.bottomRows(n_) = y_;
    if (optimizing_) {
      snap.g = g_;
      snap.v = v_;
      snap.w = w_;
      snap.epoch_boundary = cfg_.kind != EngineKind::svrg ||
                            (cfg_.inner_steps > 0 && t % cfg_.inner_steps == 0);
    }
    trace_.boundaries.push_back(std::move(snap));
  }

  const TimeVaryingTopology& topo_;
  const EngineConfig cfg_;
  const Dataset* data_;
  const int n_;
  const int d_;
  const bool optimizing_;
  long steps_ = 0;
  double smoothness_ = 1.0;

  Rng mask_rng_;
  Rng sample_rng_;

  Eigen::MatrixXd x_, y_, y_stored_, x_block_;
  Eigen::MatrixXd g_, g_run_, v_, w_, mu_;
  Eigen::MatrixXd x_alt_, y_alt_, y_alt_stored_;
  Eigen::VectorXd target_;
  Eigen::VectorXd initial_mean_;
  Eigen::VectorXd z_mean_prev_block_, v_mean_prev_block_;
  double mean_scale_ = 1.0;
  double tracking_scale_ = 1.0;
  double residual_denom_ = 0.0;

  std::uint64_t comm_entries_ = 0;
  double grad_evals_ = 0.0;
  RunTrace trace_;
};

}  // namespace

RunTrace consensus_run(const TimeVaryingTopology& topology,
                       const Eigen::MatrixXd& x0, double gamma, double q,
                       long steps, std::uint64_t seed, double stop_residual) {
  EngineConfig config;
  config.kind = EngineKind::consensus;
  config.gamma = gamma;
  config.q = q;
  config.window = topology.window;
  config.steps = steps;
  config.seed = seed;
  config.stop_residual = stop_residual;
  return consensus_run(topology, x0, config);
}

RunTrace consensus_run(const TimeVaryingTopology& topology,
                       const Eigen::MatrixXd& x0, const EngineConfig& config) {
  if (config.kind != EngineKind::consensus)
    throw std::invalid_argument("consensus_run: config.kind must be consensus");
  return SurplusEngine(topology, x0, config, nullptr, nullptr, nullptr).run();
}

RunTrace svrg_run(const TimeVaryingTopology& topology, const Dataset& data,
                  const ObjectiveConstants& consts,
                  const Eigen::VectorXd& x_star, const Eigen::MatrixXd& x0,
                  const EngineConfig& config) {
  if (config.kind != EngineKind::svrg)
    throw std::invalid_argument("svrg_run: config.kind must be svrg");
  return SurplusEngine(topology, x0, config, &data, &consts, &x_star).run();
}

RunTrace ablation_run(const TimeVaryingTopology& topology, const Dataset& data,
                      const ObjectiveConstants& consts,
                      const Eigen::VectorXd& x_star, const Eigen::MatrixXd& x0,
                      const EngineConfig& config) {
  if (config.kind != EngineKind::full_grad && config.kind != EngineKind::plain_sgd)
    throw std::invalid_argument("ablation_run: config.kind must be full_grad or plain_sgd");
  return SurplusEngine(topology, x0, config, &data, &consts, &x_star).run();
}

}  // namespace dcs
