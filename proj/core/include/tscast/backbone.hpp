#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tscast/augment.hpp"
#include "tscast/autodiff.hpp"
#include "tscast/rng.hpp"
#include "tscast/tensor.hpp"

namespace tscast {

// Encoder mapping an augmented view to a d_rep-dimensional global
// representation: shared input projection, a multi-kernel causal-conv trend
// branch and an rfft -> per-bin linear -> irfft periodicity branch, reduced
// to the final timestep and concatenated [trend | periodic].
struct BackboneConfig {
  long d_model = 64;
  long d_rep = 320;
  std::vector<long> kernel_sizes{1, 2, 4, 8, 16, 32};
  bool drop_trend = false;
  bool drop_periodicity = false;
  enum class TrendPool { branches, time } trend_pool = TrendPool::branches;
  long l_in = 336;
  long in_channels = 1;

  long d_trend() const {
    if (drop_trend) return 0;
    return drop_periodicity ? d_rep : d_rep / 2;
  }
  long d_periodic() const {
    if (drop_periodicity) return 0;
    return drop_trend ? d_rep : d_rep / 2;
  }
  long freq_bins() const { return l_in / 2 + 1; }
  long max_kernel() const;
  void validate() const;
};

// Drop one branch; the remaining branch widens to the full d_rep.
BackboneConfig ablate(BackboneConfig cfg, std::string_view drop);

struct BackboneParams {
  Tensor proj_w;  // [in_channels x d_model]
  Tensor proj_b;  // [d_model]
  std::vector<Tensor> trend_kernels;  // one [k x d_model x d_trend] per kernel size
  Tensor periodic_w;  // complex [F x d_model x d_periodic]

  static BackboneParams init(const BackboneConfig& cfg, Rng& rng);
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  bool same_shapes(const BackboneParams& o) const;
};

// Graph handles on a parameter set, shared by one or more encode calls in a
// training step.
struct ParamNodes {
  ad::ValuePtr proj_w, proj_b, periodic_w;
  std::vector<ad::ValuePtr> trend_kernels;

  static ParamNodes from(const BackboneParams& p, bool requires_grad);
};

// Which time reduction produces the representation row.
enum class TimeReduce { last, mean };

// components: [B x L_in x in_channels] each.
ad::ValuePtr encode_node(const ad::ValuePtr& periodic, const ad::ValuePtr& trend,
                         const ParamNodes& params, const BackboneConfig& cfg,
                         TimeReduce reduce = TimeReduce::last);

// Plain forward with frozen parameters; checks the output for non-finite
// activations.
Tensor encode(const Tensor& periodic, const Tensor& trend, const BackboneParams& p,
              const BackboneConfig& cfg, TimeReduce reduce = TimeReduce::last);

// Representation of an un-augmented batch of windows (both branches see the
// raw window), the form the forecasting head consumes.
Tensor encode_windows(const std::vector<const Tensor*>& windows,
                      const BackboneParams& p, const BackboneConfig& cfg);

// r^t for every stride-th position t of a single-variable series; each r^t
// sees only values at times <= t.
std::vector<std::pair<long, std::vector<double>>> encode_series(
    std::span<const double> x, const BackboneParams& p, const BackboneConfig& cfg,
    long stride);

}  // namespace tscast
