#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "dcs/sparsifier.hpp"
#include "dcs/topology.hpp"

namespace dcs {

// Mask-aware renormalization of the base weights for one coordinate m.
//
// Receiver side: row i keeps the in-neighbors that transmitted coordinate m,
// plus i itself, and renormalizes over that support. A node that hears m from
// nobody falls back to its own value (the row becomes a unit vector).
Eigen::MatrixXd normalize_in(const Eigen::MatrixXd& w_in,
                             const std::vector<CoordinateMask>& x_masks, int m);

// Sender side: a sender that transmitted coordinate m pushes over its full
// out-neighborhood with the original column weights; a sender that dropped m
// retains all of its mass (column collapses to the unit vector). Membership
// is driven by the sender's mask: that is the only reading under broadcast
// sparsification that keeps the columns stochastic.
Eigen::MatrixXd normalize_out(const Eigen::MatrixXd& w_out,
                              const std::vector<CoordinateMask>& y_masks, int m);

// 2n x 2n state/surplus mixing matrix [[A, 0], [I-A, B]]. Columns sum to one;
// the lower-left block can carry negative entries, so the matrix is not
// stochastic.
Eigen::MatrixXd assemble_mixing(const Eigen::MatrixXd& a_m,
                                const Eigen::MatrixXd& b_m);

// Perturbation structure F = [[0, I], [0, -I]]; its columns sum to zero.
Eigen::MatrixXd perturbation_matrix(int node_count);

// Limit of powers of a perturbed window product: [[11^T/n, 11^T/n], [0, 0]].
Eigen::MatrixXd rank_one_limit(int node_count);

struct BlockProduct {
  Eigen::MatrixXd matrix;  // product over one window plus gamma * F
  long window_index = 0;
  int coordinate = 0;
  double gamma = 0.0;
};

// Reverse-time product of one window's mixing matrices plus gamma * F.
// `mixings` is in chronological order.
BlockProduct block_product(std::span<const Eigen::MatrixXd> mixings,
                           double gamma, long window_index = 0,
                           int coordinate = 0);

// All eigenvalue moduli, sorted descending. Dense nonsymmetric solve (real
// Schur form: Hessenberg reduction plus shifted QR); throws on
// non-convergence of the iteration.
std::vector<double> eigenvalue_moduli(const Eigen::MatrixXd& m);

struct SpectralReport {
  std::vector<double> m_moduli;  // 2n values, descending
  std::vector<double> b_moduli;  // n values, descending
  double lambda2_m = 0.0;
  double lambda2_b = 0.0;
  double sigma = 0.0;         // max(lambda2_m, lambda2_b)
  double spectral_gap = 0.0;  // 1 - lambda2_m
};

SpectralReport spectral_sigma(const BlockProduct& m_block,
                              const Eigen::MatrixXd& b_block);

// Frobenius distance of the k-th power of a window product from its rank-one
// limit. Decays geometrically at roughly |lambda2| once transients die out.
double rank_one_limit_error(const BlockProduct& block, long power);

// Worst single-application ratio ||Mz - lift|| / ||z - lift|| over random z,
// where lift carries the conserved mean on the state block. The window
// products are not normal, so this can transiently exceed sigma; it is a
// diagnostic, not a certified contraction factor.
double empirical_contraction_ratio(const BlockProduct& block, int trials,
                                   Rng& rng);

// Builds one window's per-coordinate block products from base weights and
// per-step masks. masks[t] holds the 2n masks of step t within the window
// (x-masks first, then y-masks).
struct WindowMatrices {
  std::vector<BlockProduct> m_blocks;        // one per coordinate
  std::vector<Eigen::MatrixXd> b_products;   // one per coordinate
};

WindowMatrices window_matrices(
    const TimeVaryingTopology& topology, long window_index,
    const std::vector<std::vector<CoordinateMask>>& step_masks, double gamma,
    int dimension);

// Maximum observed sigma over a sample of windows with freshly drawn masks.
// The per-window value is the max over coordinates.
struct SigmaCalibration {
  double sigma_max = 0.0;
  std::vector<double> per_window;
};

SigmaCalibration calibrate_sigma(const TimeVaryingTopology& topology,
                                 int dimension, double q, double gamma,
                                 std::uint64_t seed, long sample_windows = 20);

}  // namespace dcs
