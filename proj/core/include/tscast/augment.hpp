#pragma once

#include <span>
#include <vector>

#include "tscast/data.hpp"
#include "tscast/rng.hpp"
#include "tscast/tensor.hpp"

namespace tscast {

// Positive-pair generation: periodic views keep the k largest-amplitude
// frequency bins, trend views are centered moving averages of width 2t+1.
struct AugmentConfig {
  long k1 = 5, k2 = 20;  // top-frequency bounds (inclusive)
  long t1 = 1, t2 = 5;   // moving-average half-window bounds (inclusive)
  enum class Mode { clear, common_trans } mode = Mode::clear;
  bool strict_distinct = false;  // re-draw until the two views' k (and t) differ

  void validate(long l_in) const;
};

struct View {
  Tensor periodic;  // [L_in x C_w]
  Tensor trend;     // [L_in x C_w]
};

struct ViewPair {
  View q, k;
  long k_q = 0, k_k = 0, t_q = 0, t_k = 0;
};

// Keep the k largest-amplitude bins of the real spectrum (ties -> lower bin
// first), zero the rest, invert. k must lie in [1, floor(n/2)+1].
std::vector<double> periodic_sample(std::span<const double> x, long k);

// Centered moving average, window 2t+1, replicate (edge) padding.
std::vector<double> trend_sample(std::span<const double> x, long t);

// s*x + m + eps with s ~ N(1, 0.5^2) clipped to [0.1, 2], m ~ N(0, 0.5^2),
// eps elementwise N(0, 0.3^2).
std::vector<double> common_transform(std::span<const double> x, Rng& rng);

ViewPair make_view_pair(const Window& w, const AugmentConfig& cfg, Rng& rng);

}  // namespace tscast
