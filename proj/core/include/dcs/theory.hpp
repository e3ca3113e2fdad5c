#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "dcs/engines.hpp"
#include "dcs/trace.hpp"

namespace dcs {

// Constants the convergence rate is built from. sigma is the consensus
// contraction factor of the window products (calibrated upstream), L and mu
// the component smoothness and global strong convexity of the objective.
struct TheoryInputs {
  double sigma = 0.0;
  double smoothness = 1.0;        // L
  double strong_convexity = 1.0;  // mu
  int window = 1;                 // B
  int node_count = 1;

  double condition_number() const { return smoothness / strong_convexity; }
};

// Largest certified step size: (1 - sigma^2)^2 / (187 Qt L).
double step_size_bound(const TheoryInputs& in);

// Epoch length that certifies a linear rate:
//   B * ceil(1496 Qt^2 / ((1 - sigma^2)^2 B) * ln(200 Qt^2)).
// Always a multiple of the window.
long epoch_length_bound(const TheoryInputs& in);

// Per-epoch contraction factor 8 Qt^2 exp(-(1-sigma^2)^2 T / (748 Qt^2)) + 0.66.
double outer_contraction(const TheoryInputs& in, long epoch_length);

// The 3x3 linear error recursion u' <= J u + H u~ coupling consensus spread,
// mean optimality gap, and tracking spread, with the weight vectors its norm
// certificates use.
struct ErrorSystem {
  Eigen::Matrix3d j = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  Eigen::Vector3d delta = Eigen::Vector3d::Ones();      // [1, 8Qt^2, 6656Qt^2/(1-s^2)^2]
  Eigen::Vector3d q_weights = Eigen::Vector3d::Ones();  // [1, 1, 1457/(1-s^2)^2]
  double alpha = 0.0;
  bool alpha_admissible = false;  // alpha <= mu (1-sigma^2) / (14 sqrt(2) L^2)
};

ErrorSystem build_error_system(double alpha, const TheoryInputs& in,
                               int node_count);

// Induced weighted infinity norm: max_i sum_j |M_ij| w_j / w_i.
double weighted_inf_norm(const Eigen::MatrixXd& m, const Eigen::VectorXd& w);

// Norm certificates for the error system at a given step size:
//   rho(J) <= |||J|||_delta <= 1 - mu alpha / 4   and
//   |||(I - J)^{-1} H|||_q < 0.66.
// The delta comparison is non-strict: the second row is tight by the very
// construction of delta, so equality up to roundoff counts as holding.
struct NormCertificates {
  double rho_j = 0.0;
  double norm_j_delta = 0.0;
  double contraction_bound = 0.0;  // 1 - mu alpha / 4
  double norm_feedback_q = 0.0;    // |||(I - J)^{-1} H|||_q
  bool spectral_ok = false;
  bool delta_ok = false;
  bool entrywise_ok = false;  // J delta <= (1 - mu alpha/4) delta
  bool feedback_ok = false;
  bool ok = false;
};

NormCertificates norm_certificates(double alpha, const TheoryInputs& in);

// Error vectors measured at one block boundary.
struct ErrorPoint {
  long t = 0;
  Eigen::Vector3d u = Eigen::Vector3d::Zero();
  Eigen::Vector3d u_tilde = Eigen::Vector3d::Zero();
};

// Requires a trace recorded with boundary snapshots.
std::vector<ErrorPoint> errors_from_trace(const RunTrace& trace,
                                          const Eigen::VectorXd& x_star,
                                          double smoothness);

struct RecursionReport {
  double worst_ratio = 0.0;  // max LHS/RHS over checked components
  long violations = 0;       // components exceeding (1 + slack)
  long checked = 0;          // 0 when every bound sits at the noise floor

  bool ok() const { return violations == 0; }  // vacuously true at zero error
};

// Monte-Carlo check of the error recursion: averages the per-run error
// vectors across the ensemble and tests u^{k+1} <= J u^k + H u~^k
// componentwise with the given relative slack.
RecursionReport verify_error_recursion(
    const std::vector<std::vector<ErrorPoint>>& ensemble,
    const ErrorSystem& system, double slack = 0.05);

// Per-window contraction factors measured from a trace's recorded masks:
// sigma_k = max over coordinates of the window-k block-product factors.
std::vector<double> window_contraction_factors(
    const TimeVaryingTopology& topology, const RunTrace& trace, double gamma,
    int dimension, long windows);

// Pathwise consensus-spread recursion over one (deterministic) run:
//   u1^{k+1} <= (1 + sigma_k^2)/2 u1^k + 2 alpha^2/(1 - sigma_k^2) t3^k,
// with t3 the raw tracking spread and sigma_k the measured window factor.
RecursionReport consensus_recursion_check(const RunTrace& trace,
                                          std::span<const double> window_sigmas,
                                          double alpha, double slack = 0.01);

}  // namespace dcs
