#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dcs/rng.hpp"

namespace dcs {

enum class ObjectiveKind { linear, logistic };

// Per-node data for the decentralized finite-sum objective
//   f(x) = (1/n) sum_i f_i(x),   f_i(x) = (1/m_i) sum_j f_{i,j}(x).
// Linear components:   f_{i,j}(x) = (y_ij - d_ij^T x)^2.
// Logistic components: f_{i,j}(x) = (mu_reg/2)||x||^2 + ln(1 + exp(-y_ij d_ij^T x)),
// with labels y_ij in {-1, +1}.
struct Dataset {
  ObjectiveKind kind = ObjectiveKind::linear;
  std::vector<Eigen::MatrixXd> samples;  // node i: m_i x d
  std::vector<Eigen::VectorXd> targets;  // node i: m_i
  double mu_reg = 0.0;                   // logistic only

  int node_count() const { return static_cast<int>(samples.size()); }
  int dimension() const { return static_cast<int>(samples.front().cols()); }
  int sample_count(int node) const { return static_cast<int>(samples[node].rows()); }
  long total_samples() const;
};

struct LinregInstance {
  Dataset data;
  Eigen::VectorXd planted_x;
};

// Rows drawn standard normal and rescaled to sum to one (exactly-zero sums
// redrawn); targets are D_i x* + Gaussian noise.
LinregInstance gen_linreg(int node_count, int samples_per_node, int dimension,
                          double noise_variance, Rng& rng);

// Unit-norm Gaussian feature rows; +/-1 labels from a planted separator with
// 10% flips.
Dataset gen_logreg(int node_count, int samples_per_node, int dimension,
                   double mu_reg, Rng& rng);

double component_value(const Dataset& data, int node, int sample,
                       const Eigen::VectorXd& x);
Eigen::VectorXd component_grad(const Dataset& data, int node, int sample,
                               const Eigen::VectorXd& x);

Eigen::VectorXd local_full_grad(const Dataset& data, int node,
                                const Eigen::VectorXd& x);
double local_value(const Dataset& data, int node, const Eigen::VectorXd& x);

double objective_value(const Dataset& data, const Eigen::VectorXd& x);
Eigen::VectorXd objective_grad(const Dataset& data, const Eigen::VectorXd& x);

struct ObjectiveConstants {
  double smoothness = 0.0;        // L: component gradients are L-Lipschitz
  double strong_convexity = 0.0;  // mu: lower curvature bound of f
  double condition_number = 0.0;  // L / mu
};

// Linear: L = max_{i,j} 2||d_ij||^2, mu = lambda_min of the global Hessian.
// Logistic: L = max_{i,j} (||d_ij||^2/4 + mu_reg), mu = mu_reg (a safe lower
// bound; the true constant is unknown, and underestimating mu only shrinks
// the admissible step sizes). Throws when mu <= 0.
ObjectiveConstants constants(const Dataset& data);

struct OptimumCertificate {
  Eigen::VectorXd x_star;
  double gradient_norm = 0.0;
};

// Linear: normal-equation solve. Logistic: full-gradient descent with step
// 1/L until ||grad f|| <= tolerance, bounded by `budget` iterations.
OptimumCertificate centralized_optimum(const Dataset& data,
                                       double tolerance = 1e-12,
                                       long budget = 50'000'000);

// One CSV per node under `dir` (rows = samples, last column = target) plus a
// small JSON sidecar carrying kind/mu_reg.
void write_dataset_csv(const Dataset& data, const std::string& dir);
Dataset read_dataset_csv(const std::string& dir);

}  // namespace dcs
