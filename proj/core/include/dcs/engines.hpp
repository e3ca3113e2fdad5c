#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "dcs/objectives.hpp"
#include "dcs/sparsifier.hpp"
#include "dcs/topology.hpp"
#include "dcs/trace.hpp"

namespace dcs {

enum class EngineKind { consensus, svrg, full_grad, plain_sgd };

struct EngineConfig {
  EngineKind kind = EngineKind::consensus;
  double alpha = 0.0;       // step size (optimizing engines)
  double gamma = 0.05;      // surplus perturbation strength, in (0, 1)
  double q = 1.0;           // fraction of coordinates transmitted per message
  int window = 1;           // B: joint-connectivity window
  long inner_steps = 0;     // T: steps per outer epoch (svrg); multiple of B
  int epochs = 1;           // S: outer epochs (svrg)
  long steps = 0;           // total steps (consensus and ablations)
  std::uint64_t seed = 0;
  double stop_residual = -1.0;  // stop early once residual falls below (if > 0)
  int record_stride = 1;        // optimizers also record every block boundary
  bool record_boundaries = false;
  bool record_masks = false;
  bool cross_check = false;  // co-run the element-wise update form

  long total_steps() const {
    return kind == EngineKind::svrg ? inner_steps * epochs : steps;
  }
};

// Surplus-based average consensus with per-coordinate sparsification.
// x0 is n x d (one row per node); surpluses start at zero.
RunTrace consensus_run(const TimeVaryingTopology& topology,
                       const Eigen::MatrixXd& x0, double gamma, double q,
                       long steps, std::uint64_t seed,
                       double stop_residual = -1.0);

// Same, with the full option set.
RunTrace consensus_run(const TimeVaryingTopology& topology,
                       const Eigen::MatrixXd& x0, const EngineConfig& config);

// Variance-reduced gradient tracking over the surplus consensus machinery.
RunTrace svrg_run(const TimeVaryingTopology& topology, const Dataset& data,
                  const ObjectiveConstants& consts,
                  const Eigen::VectorXd& x_star, const Eigen::MatrixXd& x0,
                  const EngineConfig& config);

// full_grad: local full gradients every block (no inner/outer loop).
// plain_sgd: one uncorrected stochastic gradient per block.
RunTrace ablation_run(const TimeVaryingTopology& topology, const Dataset& data,
                      const ObjectiveConstants& consts,
                      const Eigen::VectorXd& x_star, const Eigen::MatrixXd& x0,
                      const EngineConfig& config);

// Variance-reduced estimate for node i:
//   v = grad f_{i,l}(x at block start) - grad f_{i,l}(w snapshot) + mu_full.
Eigen::VectorXd svrg_gradient_estimate(const Dataset& data, int node,
                                       const Eigen::VectorXd& x_block_start,
                                       const Eigen::VectorXd& w_snapshot,
                                       const Eigen::VectorXd& mu_full,
                                       int sample);

// One-shot window form of the tracking update:
//   g_new(i, m) = sum_j [b_products[m]]_{ij} g_prev(j, m) + v_new - v_old.
// The engine applies the same thing incrementally, one step at a time.
Eigen::MatrixXd gradient_tracking_update(
    const Eigen::MatrixXd& g_prev,
    std::span<const Eigen::MatrixXd> b_products, const Eigen::MatrixXd& v_new,
    const Eigen::MatrixXd& v_old);

}  // namespace dcs
