#include "dcs/mixing.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <stdexcept>

namespace dcs {

Eigen::MatrixXd normalize_in(const Eigen::MatrixXd& w_in,
                             const std::vector<CoordinateMask>& x_masks,
                             int m) {
  const int n = static_cast<int>(w_in.rows());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < n; ++j)
      if (w_in(i, j) > 0.0 && (j == i || x_masks[j].keeps(m)))
        sum += w_in(i, j);
    for (int j = 0; j < n; ++j)
      if (w_in(i, j) > 0.0 && (j == i || x_masks[j].keeps(m)))
        a(i, j) = w_in(i, j) / sum;
  }
  return a;
}

Eigen::MatrixXd normalize_out(const Eigen::MatrixXd& w_out,
                              const std::vector<CoordinateMask>& y_masks,
                              int m) {
  const int n = static_cast<int>(w_out.cols());
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    if (y_masks[j].keeps(m)) {
      const double sum = w_out.col(j).sum();
      b.col(j) = w_out.col(j) / sum;
    } else {
      b(j, j) = 1.0;  // sender dropped m: mass stays home
    }
  }
  return b;
}

Eigen::MatrixXd assemble_mixing(const Eigen::MatrixXd& a_m,
                                const Eigen::MatrixXd& b_m) {
  const int n = static_cast<int>(a_m.rows());
  if (a_m.cols() != n || b_m.rows() != n || b_m.cols() != n)
    throw std::invalid_argument("assemble_mixing: dimension mismatch");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  m.topLeftCorner(n, n) = a_m;
  m.bottomLeftCorner(n, n) = Eigen::MatrixXd::Identity(n, n) - a_m;
  m.bottomRightCorner(n, n) = b_m;
  return m;
}

Eigen::MatrixXd perturbation_matrix(int node_count) {
  const int n = node_count;
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  f.topRightCorner(n, n) = Eigen::MatrixXd::Identity(n, n);
  f.bottomRightCorner(n, n) = -Eigen::MatrixXd::Identity(n, n);
  return f;
}

Eigen::MatrixXd rank_one_limit(int node_count) {
  const int n = node_count;
  Eigen::MatrixXd lim = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  lim.topLeftCorner(n, n).setConstant(1.0 / n);
  lim.topRightCorner(n, n).setConstant(1.0 / n);
  return lim;
}

BlockProduct block_product(std::span<const Eigen::MatrixXd> mixings,
                           double gamma, long window_index, int coordinate) {
  if (mixings.empty()) throw std::invalid_argument("block_product: empty window");
  Eigen::MatrixXd prod = mixings.front();
  for (std::size_t t = 1; t < mixings.size(); ++t)
    prod = mixings[t] * prod;  // reverse-time: later steps multiply on the left
  const int two_n = static_cast<int>(prod.rows());
  prod += gamma * perturbation_matrix(two_n / 2);
  return BlockProduct{std::move(prod), window_index, coordinate, gamma};
}

std::vector<double> eigenvalue_moduli(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("matrix must be square");
  Eigen::EigenSolver<Eigen::MatrixXd> solver(m, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("eigenvalue iteration did not converge");
  std::vector<double> moduli(m.rows());
  for (int i = 0; i < m.rows(); ++i) moduli[i] = std::abs(solver.eigenvalues()[i]);
  std::sort(moduli.begin(), moduli.end(), std::greater<double>());
  return moduli;
}

SpectralReport spectral_sigma(const BlockProduct& m_block,
                              const Eigen::MatrixXd& b_block) {
  SpectralReport report;
  report.m_moduli = eigenvalue_moduli(m_block.matrix);
  report.b_moduli = eigenvalue_moduli(b_block);
  report.lambda2_m = report.m_moduli.size() > 1 ? report.m_moduli[1] : 0.0;
  report.lambda2_b = report.b_moduli.size() > 1 ? report.b_moduli[1] : 0.0;
  report.sigma = std::max(report.lambda2_m, report.lambda2_b);
  report.spectral_gap = 1.0 - report.lambda2_m;
  return report;
}

namespace {

Eigen::MatrixXd matrix_power(Eigen::MatrixXd base, long k) {
  Eigen::MatrixXd result =
      Eigen::MatrixXd::Identity(base.rows(), base.cols());
  while (k > 0) {
    if (k & 1) result = result * base;
    base = base * base;
    k >>= 1;
  }
  return result;
}

}  // namespace

double rank_one_limit_error(const BlockProduct& block, long power) {
  if (power < 0) throw std::invalid_argument("power must be >= 0");
  const int n = static_cast<int>(block.matrix.rows()) / 2;
  return (matrix_power(block.matrix, power) - rank_one_limit(n)).norm();
}

double empirical_contraction_ratio(const BlockProduct& block, int trials,
                                   Rng& rng) {
  const int two_n = static_cast<int>(block.matrix.rows());
  const int n = two_n / 2;
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    Eigen::VectorXd z(two_n);
    for (int i = 0; i < two_n; ++i) z[i] = rng.normal();
    const double mean = z.sum() / n;
    Eigen::VectorXd lift = Eigen::VectorXd::Zero(two_n);
    lift.head(n).setConstant(mean);
    const double before = (z - lift).norm();
    if (before < 1e-300) continue;
    const double after = (block.matrix * z - lift).norm();
    worst = std::max(worst, after / before);
  }
  return worst;
}

WindowMatrices window_matrices(
    const TimeVaryingTopology& topology, long window_index,
    const std::vector<std::vector<CoordinateMask>>& step_masks, double gamma,
    int dimension) {
  const int b = topology.window;
  const int n = topology.node_count;
  if (static_cast<int>(step_masks.size()) != b)
    throw std::invalid_argument("window_matrices: need one mask set per step");

  WindowMatrices out;
  out.m_blocks.reserve(dimension);
  out.b_products.reserve(dimension);

  std::vector<BaseWeights> weights;
  weights.reserve(b);
  for (int s = 0; s < b; ++s)
    weights.push_back(base_weights(topology.snapshots[window_index * b + s]));

  for (int m = 0; m < dimension; ++m) {
    std::vector<Eigen::MatrixXd> mixings;
    mixings.reserve(b);
    Eigen::MatrixXd b_prod = Eigen::MatrixXd::Identity(n, n);
    for (int s = 0; s < b; ++s) {
      const auto& masks = step_masks[s];
      std::vector<CoordinateMask> x_masks(masks.begin(), masks.begin() + n);
      std::vector<CoordinateMask> y_masks(masks.begin() + n, masks.end());
      Eigen::MatrixXd a_m = normalize_in(weights[s].w_in, x_masks, m);
      Eigen::MatrixXd b_m = normalize_out(weights[s].w_out, y_masks, m);
      b_prod = b_m * b_prod;
      mixings.push_back(assemble_mixing(a_m, b_m));
    }
    out.m_blocks.push_back(block_product(mixings, gamma, window_index, m));
    out.b_products.push_back(std::move(b_prod));
  }
  return out;
}

SigmaCalibration calibrate_sigma(const TimeVaryingTopology& topology,
                                 int dimension, double q, double gamma,
                                 std::uint64_t seed, long sample_windows) {
  const int n = topology.node_count;
  const long windows =
      std::min(sample_windows, topology.horizon() / topology.window);
  if (windows < 1)
    throw std::invalid_argument("calibrate_sigma: topology has no full window");

  SigmaCalibration cal;
  Rng rng = Rng::substream(seed, "sigma-calibration");
  for (long k = 0; k < windows; ++k) {
    std::vector<std::vector<CoordinateMask>> step_masks(topology.window);
    for (int s = 0; s < topology.window; ++s) {
      step_masks[s].reserve(2 * n);
      for (int v = 0; v < 2 * n; ++v)
        step_masks[s].push_back(draw_mask(dimension, q, rng));
    }
    // With full masks every coordinate sees the same matrices.
    const int coords = q >= 1.0 ? 1 : dimension;
    WindowMatrices wm = window_matrices(topology, k, step_masks, gamma, coords);
    double sigma_k = 0.0;
    for (int m = 0; m < coords; ++m) {
      SpectralReport rep = spectral_sigma(wm.m_blocks[m], wm.b_products[m]);
      sigma_k = std::max(sigma_k, rep.sigma);
    }
    cal.per_window.push_back(sigma_k);
    cal.sigma_max = std::max(cal.sigma_max, sigma_k);
  }
  return cal;
}

}  // namespace dcs
