#pragma once

#include <span>
#include <vector>

#include "dcs/rng.hpp"

namespace dcs {

// Number of coordinates a sender transmits for fraction q of dimension d.
int kept_count(int dimension, double q);

// The coordinates one virtual node transmits in one step.
struct CoordinateMask {
  int dimension = 0;
  std::vector<int> kept;                 // sorted indices
  std::vector<std::uint8_t> keep_flag;   // dense membership, size `dimension`

  bool keeps(int m) const { return keep_flag[static_cast<std::size_t>(m)] != 0; }
  int kept_size() const { return static_cast<int>(kept.size()); }
  static CoordinateMask full(int dimension);
  static CoordinateMask from_kept(int dimension, std::vector<int> kept);
};

// Uniformly random subset of ceil(q*d) coordinates.
CoordinateMask draw_mask(int dimension, double q, Rng& rng);

// Sparsified message: only the kept coordinates travel.
struct MaskedMessage {
  int source = 0;  // virtual node id
  CoordinateMask mask;
  std::vector<double> values;  // one per kept coordinate, in mask order

  // Dense receiver-side view: dropped coordinates read as zero.
  std::vector<double> dense() const;
};

MaskedMessage apply_mask(std::span<const double> vector,
                         const CoordinateMask& mask, int source = 0);

}  // namespace dcs
