#include "dcs/sparsifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dcs {

int kept_count(int dimension, double q) {
  if (dimension < 1) throw std::invalid_argument("dimension must be >= 1");
  if (q <= 0.0 || q > 1.0) throw std::invalid_argument("q must be in (0,1]");
  int k = static_cast<int>(std::ceil(q * dimension));
  return std::min(k, dimension);
}

CoordinateMask CoordinateMask::full(int dimension) {
  CoordinateMask mask;
  mask.dimension = dimension;
  mask.kept.resize(dimension);
  std::iota(mask.kept.begin(), mask.kept.end(), 0);
  mask.keep_flag.assign(dimension, 1);
  return mask;
}

CoordinateMask CoordinateMask::from_kept(int dimension, std::vector<int> kept) {
  CoordinateMask mask;
  mask.dimension = dimension;
  std::sort(kept.begin(), kept.end());
  mask.kept = std::move(kept);
  mask.keep_flag.assign(dimension, 0);
  for (int m : mask.kept) {
    if (m < 0 || m >= dimension) throw std::invalid_argument("coordinate out of range");
    mask.keep_flag[m] = 1;
  }
  return mask;
}

CoordinateMask draw_mask(int dimension, double q, Rng& rng) {
  const int k = kept_count(dimension, q);
  if (k == dimension) return CoordinateMask::full(dimension);
  // Partial Fisher-Yates: the first k slots end up a uniform subset.
  std::vector<int> idx(dimension);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(dimension - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return CoordinateMask::from_kept(dimension, std::move(idx));
}

MaskedMessage apply_mask(std::span<const double> vector,
                         const CoordinateMask& mask, int source) {
  if (static_cast<int>(vector.size()) != mask.dimension)
    throw std::invalid_argument("apply_mask: dimension mismatch");
  MaskedMessage msg;
  msg.source = source;
  msg.mask = mask;
  msg.values.reserve(mask.kept.size());
  for (int m : mask.kept) msg.values.push_back(vector[m]);
  return msg;
}

std::vector<double> MaskedMessage::dense() const {
  std::vector<double> out(mask.dimension, 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) out[mask.kept[i]] = values[i];
  return out;
}

}  // namespace dcs
