#include "dcs/theory.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "dcs/mixing.hpp"

namespace dcs {

namespace {

double gap_sq(const TheoryInputs& in) {
  if (in.sigma < 0.0 || in.sigma >= 1.0)
    throw std::invalid_argument("sigma must lie in [0, 1)");
  const double g = 1.0 - in.sigma * in.sigma;
  return g * g;
}

}  // namespace

double step_size_bound(const TheoryInputs& in) {
  return gap_sq(in) / (187.0 * in.condition_number() * in.smoothness);
}

long epoch_length_bound(const TheoryInputs& in) {
  const double qt2 = in.condition_number() * in.condition_number();
  const double b = static_cast<double>(in.window);
  const double blocks =
      std::ceil(1496.0 * qt2 / (gap_sq(in) * b) * std::log(200.0 * qt2));
  return in.window * static_cast<long>(blocks);
}

double outer_contraction(const TheoryInputs& in, long epoch_length) {
  const double qt2 = in.condition_number() * in.condition_number();
  return 8.0 * qt2 *
             std::exp(-gap_sq(in) * static_cast<double>(epoch_length) /
                      (748.0 * qt2)) +
         0.66;
}

ErrorSystem build_error_system(double alpha, const TheoryInputs& in,
                               int node_count) {
  if (alpha < 0.0) throw std::invalid_argument("alpha must be >= 0");
  const double s2 = in.sigma * in.sigma;
  const double gap = 1.0 - s2;
  const double l = in.smoothness;
  const double mu = in.strong_convexity;
  const double qt2 = in.condition_number() * in.condition_number();

  ErrorSystem sys;
  sys.alpha = alpha;
  sys.j << (1.0 + s2) / 2.0, 0.0, 2.0 * alpha * alpha * l * l / gap,
      2.0 * l * l * alpha / mu, 1.0 - mu * alpha / 2.0, 0.0,
      120.0 / gap, 89.0 / gap, (3.0 + s2) / 4.0;
  const double h_mid = 4.0 * l * l * alpha * alpha / node_count;
  sys.h << 0.0, 0.0, 0.0,
      h_mid, h_mid, 0.0,
      38.0 / gap, 38.0 / gap, 0.0;
  sys.delta << 1.0, 8.0 * qt2, 6656.0 * qt2 / (gap * gap);
  sys.q_weights << 1.0, 1.0, 1457.0 / (gap * gap);
  sys.alpha_admissible = alpha <= mu * gap / (14.0 * std::sqrt(2.0) * l * l);
  return sys;
}

double weighted_inf_norm(const Eigen::MatrixXd& m, const Eigen::VectorXd& w) {
  if (m.rows() != m.cols() || m.rows() != w.size())
    throw std::invalid_argument("weighted_inf_norm: dimension mismatch");
  if ((w.array() <= 0.0).any())
    throw std::invalid_argument("weighted_inf_norm: weights must be positive");
  double norm = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) row += std::abs(m(i, j)) * w[j];
    norm = std::max(norm, row / w[i]);
  }
  return norm;
}

NormCertificates norm_certificates(double alpha, const TheoryInputs& in) {
  const ErrorSystem sys = build_error_system(alpha, in, in.node_count);
  constexpr double kRoundoff = 1e-12;

  NormCertificates cert;
  cert.rho_j = eigenvalue_moduli(sys.j).front();
  cert.norm_j_delta = weighted_inf_norm(sys.j, sys.delta);
  cert.contraction_bound = 1.0 - in.strong_convexity * alpha / 4.0;
  // The computed spectral radius carries QR-iteration noise proportional to
  // ||J||, which dwarfs kRoundoff when the mixing terms are large.
  const double eig_tol =
      1e4 * std::numeric_limits<double>::epsilon() * (1.0 + sys.j.norm());
  cert.spectral_ok =
      cert.rho_j <= cert.norm_j_delta * (1.0 + kRoundoff) + eig_tol;
  cert.delta_ok =
      cert.norm_j_delta <= cert.contraction_bound * (1.0 + kRoundoff);

  const Eigen::Vector3d lhs = sys.j * sys.delta;
  const Eigen::Vector3d rhs = cert.contraction_bound * sys.delta;
  cert.entrywise_ok = (lhs.array() <= rhs.array() * (1.0 + kRoundoff)).all();

  // The pivots of I - J legitimately span twenty orders of magnitude
  // (mu*alpha/2 against 120/(1-sigma^2)), so rank-revealing decompositions
  // would truncate the system; solve without a rank cutoff and certify the
  // solve by its residual.
  const Eigen::Matrix3d resolvent = Eigen::Matrix3d::Identity() - sys.j;
  const Eigen::Matrix3d feedback =
      Eigen::PartialPivLU<Eigen::Matrix3d>(resolvent).solve(sys.h);
  if (!feedback.allFinite() ||
      (resolvent * feedback - sys.h).cwiseAbs().maxCoeff() >
          1e-8 * std::max(1.0, sys.h.cwiseAbs().maxCoeff()))
    throw std::runtime_error("norm_certificates: I - J is singular");
  cert.norm_feedback_q = weighted_inf_norm(feedback, sys.q_weights);
  cert.feedback_ok = cert.norm_feedback_q < 0.66;

  cert.ok = cert.spectral_ok && cert.delta_ok && cert.entrywise_ok &&
            cert.feedback_ok;
  return cert;
}

namespace {

struct BoundaryErrors {
  double spread_x = 0.0;       // sum_{i<=n} ||z_i - zbar||^2
  double mean_gap = 0.0;       // n ||zbar - x*||^2
  double tracking_raw = 0.0;   // sum_{i<=n} ||g_i - gbar||^2
};

BoundaryErrors boundary_errors(const BoundarySnapshot& snap,
                               const Eigen::VectorXd& x_star) {
  const int n = static_cast<int>(snap.z.rows()) / 2;
  BoundaryErrors out;
  const Eigen::VectorXd z_mean = (snap.z.colwise().sum() / n).transpose();
  for (int i = 0; i < n; ++i)
    out.spread_x += (snap.z.row(i).transpose() - z_mean).squaredNorm();
  out.mean_gap = n * (z_mean - x_star).squaredNorm();
  if (snap.g.size() > 0) {
    const Eigen::VectorXd g_mean = snap.g.colwise().mean().transpose();
    for (int i = 0; i < n; ++i)
      out.tracking_raw += (snap.g.row(i).transpose() - g_mean).squaredNorm();
  }
  return out;
}

}  // namespace

std::vector<ErrorPoint> errors_from_trace(const RunTrace& trace,
                                          const Eigen::VectorXd& x_star,
                                          double smoothness) {
  if (trace.boundaries.empty())
    throw std::invalid_argument("errors_from_trace: trace has no boundary snapshots");
  std::vector<ErrorPoint> points;
  points.reserve(trace.boundaries.size());
  for (const auto& snap : trace.boundaries) {
    if (snap.g.size() == 0 || snap.w.size() == 0)
      throw std::invalid_argument("errors_from_trace: boundary snapshots lack g/w");
    const int n = static_cast<int>(snap.z.rows()) / 2;
    const BoundaryErrors e = boundary_errors(snap, x_star);

    ErrorPoint p;
    p.t = snap.t;
    p.u << e.spread_x, e.mean_gap,
        e.tracking_raw / (smoothness * smoothness);

    // tau: live states at epoch boundaries, snapshots in between.
    Eigen::MatrixXd tau(n, snap.z.cols());
    for (int i = 0; i < n; ++i)
      tau.row(i) = snap.epoch_boundary ? snap.z.row(i) : snap.w.row(i);
    const Eigen::VectorXd tau_mean = tau.colwise().mean().transpose();
    double tau_spread = 0.0;
    for (int i = 0; i < n; ++i)
      tau_spread += (tau.row(i).transpose() - tau_mean).squaredNorm();
    p.u_tilde << tau_spread, n * (tau_mean - x_star).squaredNorm(), 0.0;
    points.push_back(std::move(p));
  }
  return points;
}

RecursionReport verify_error_recursion(
    const std::vector<std::vector<ErrorPoint>>& ensemble,
    const ErrorSystem& system, double slack) {
  if (ensemble.empty()) throw std::invalid_argument("empty ensemble");
  const std::size_t count = ensemble.front().size();
  for (const auto& run : ensemble)
    if (run.size() != count)
      throw std::invalid_argument("ensemble runs disagree on boundary count");

  std::vector<Eigen::Vector3d> u(count, Eigen::Vector3d::Zero());
  std::vector<Eigen::Vector3d> u_tilde(count, Eigen::Vector3d::Zero());
  for (const auto& run : ensemble)
    for (std::size_t k = 0; k < count; ++k) {
      u[k] += run[k].u;
      u_tilde[k] += run[k].u_tilde;
    }
  for (std::size_t k = 0; k < count; ++k) {
    u[k] /= static_cast<double>(ensemble.size());
    u_tilde[k] /= static_cast<double>(ensemble.size());
  }

  // Components whose predicted bound underflows the initial error scale are
  // numerical noise, not evidence.
  const double floor = 1e-12 * u.front().maxCoeff();

  RecursionReport report;
  for (std::size_t k = 0; k + 1 < count; ++k) {
    const Eigen::Vector3d rhs = system.j * u[k] + system.h * u_tilde[k];
    for (int c = 0; c < 3; ++c) {
      if (rhs[c] <= floor) continue;
      const double ratio = u[k + 1][c] / rhs[c];
      report.worst_ratio = std::max(report.worst_ratio, ratio);
      report.checked += 1;
      if (ratio > 1.0 + slack) report.violations += 1;
    }
  }
  return report;
}

std::vector<double> window_contraction_factors(
    const TimeVaryingTopology& topology, const RunTrace& trace, double gamma,
    int dimension, long windows) {
  const int b = topology.window;
  if (static_cast<long>(trace.masks_per_step.size()) < windows * b)
    throw std::invalid_argument(
        "window_contraction_factors: trace lacks recorded masks");
  std::vector<double> sigmas;
  sigmas.reserve(windows);
  for (long k = 0; k < windows; ++k) {
    std::vector<std::vector<CoordinateMask>> step_masks(
        trace.masks_per_step.begin() + k * b,
        trace.masks_per_step.begin() + (k + 1) * b);
    const WindowMatrices wm =
        window_matrices(topology, k, step_masks, gamma, dimension);
    double sigma_k = 0.0;
    for (int m = 0; m < dimension; ++m) {
      const SpectralReport rep = spectral_sigma(wm.m_blocks[m], wm.b_products[m]);
      sigma_k = std::max(sigma_k, rep.sigma);
    }
    sigmas.push_back(sigma_k);
  }
  return sigmas;
}

RecursionReport consensus_recursion_check(const RunTrace& trace,
                                          std::span<const double> window_sigmas,
                                          double alpha, double slack) {
  if (trace.boundaries.size() < 2)
    throw std::invalid_argument("consensus_recursion_check: need boundary snapshots");
  const std::size_t windows =
      std::min(window_sigmas.size(), trace.boundaries.size() - 1);

  std::vector<BoundaryErrors> errors;
  errors.reserve(windows + 1);
  const int d = static_cast<int>(trace.boundaries.front().z.cols());
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(d);
  for (std::size_t k = 0; k <= windows; ++k)
    errors.push_back(boundary_errors(trace.boundaries[k], origin));

  const double floor = 1e-18 * std::max(errors.front().spread_x, 1.0);
  RecursionReport report;
  for (std::size_t k = 0; k < windows; ++k) {
    const double s2 = window_sigmas[k] * window_sigmas[k];
    if (s2 >= 1.0) continue;  // no contraction certified for this window
    const double rhs = 0.5 * (1.0 + s2) * errors[k].spread_x +
                       2.0 * alpha * alpha / (1.0 - s2) * errors[k].tracking_raw;
    if (rhs <= floor) continue;
    const double ratio = errors[k + 1].spread_x / rhs;
    report.worst_ratio = std::max(report.worst_ratio, ratio);
    report.checked += 1;
    if (ratio > 1.0 + slack) report.violations += 1;
  }
  return report;
}

}  // namespace dcs
