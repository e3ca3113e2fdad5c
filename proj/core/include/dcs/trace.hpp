#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dcs/sparsifier.hpp"

namespace dcs {

// One recorded step of a run. `residual` is the stacked-node distance to the
// run's target (centralized optimum, or the initial average for consensus),
// normalized by its value at t = 0. The error columns mirror the block-level
// error vector: consensus spread, mean-to-target distance, tracking spread.
struct StepRecord {
  long t = 0;
  double residual = 0.0;
  double consensus_error = 0.0;
  double optimality_error = 0.0;
  double tracking_error = 0.0;
  std::uint64_t comm_entries_cum = 0;
  double grad_evals_cum = 0.0;  // component evaluations per sample
};

// Full state captured at a block boundary t = kB (opt-in; used by the
// error-recursion checks).
struct BoundarySnapshot {
  long t = 0;
  Eigen::MatrixXd z;  // 2n x d: states stacked over surpluses
  Eigen::MatrixXd g;  // n x d tracked gradients
  Eigen::MatrixXd v;  // n x d gradient estimates
  Eigen::MatrixXd w;  // n x d outer-loop snapshots
  bool epoch_boundary = false;
};

struct RunTrace {
  std::vector<StepRecord> steps;
  std::vector<BoundarySnapshot> boundaries;
  // Per-step transmit masks (2n per step, x-masks then y-masks); opt-in.
  std::vector<std::vector<CoordinateMask>> masks_per_step;

  long steps_taken = 0;
  double final_residual = 0.0;
  std::uint64_t comm_entries_total = 0;
  double grad_evals_total = 0.0;

  // Worst relative drift of the conserved per-coordinate mean.
  double max_mass_drift = 0.0;
  // Worst relative gap of mean(g) = mean(v) across block boundaries.
  double max_tracking_gap = 0.0;
  // Worst relative error of mean(z') = mean(z) - alpha * mean(v) per block.
  double max_mean_dynamics_gap = 0.0;
  // Worst state divergence of the element-wise update cross-check, if run.
  double elementwise_max_divergence = 0.0;

  double duration_seconds = 0.0;
};

}  // namespace dcs
