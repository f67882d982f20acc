#include "tscast/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "tscast/errors.hpp"

namespace tscast {

long BackboneConfig::max_kernel() const {
  long m = 1;
  for (long k : kernel_sizes) m = std::max(m, k);
  return m;
}

void BackboneConfig::validate() const {
  if (drop_trend && drop_periodicity)
    throw ConfigError("backbone: cannot drop both branches");
  if (d_rep <= 0 || (!drop_trend && !drop_periodicity && d_rep % 2 != 0))
    throw ConfigError("backbone: d_rep must be even when both branches are present");
  if (d_model <= 0) throw ConfigError("backbone: d_model must be positive");
  if (l_in <= 0) throw ConfigError("backbone: l_in must be positive");
  if (in_channels <= 0) throw ConfigError("backbone: in_channels must be positive");
  if (!drop_trend) {
    if (kernel_sizes.empty()) throw ConfigError("backbone: no kernel sizes");
    for (long k : kernel_sizes)
      if (k < 1 || k > l_in)
        throw ConfigError("backbone: kernel size " + std::to_string(k) +
                          " outside [1, " + std::to_string(l_in) + "]");
  }
}

BackboneConfig ablate(BackboneConfig cfg, std::string_view drop) {
  if (drop == "trend")
    cfg.drop_trend = true;
  else if (drop == "periodicity")
    cfg.drop_periodicity = true;
  else
    throw ConfigError("ablate: unknown branch '" + std::string(drop) + "'");
  cfg.validate();
  return cfg;
}

namespace {

void fill_uniform(Tensor& t, double bound, Rng& rng) {
  for (long i = 0; i < t.value_count(); ++i)
    t.raw(i) = (rng.uniform01() * 2.0 - 1.0) * bound;
}

}  // namespace

BackboneParams BackboneParams::init(const BackboneConfig& cfg, Rng& rng) {
  cfg.validate();
  BackboneParams p;
  p.proj_w = Tensor({cfg.in_channels, cfg.d_model});
  p.proj_b = Tensor({cfg.d_model});
  double b = 1.0 / std::sqrt(static_cast<double>(cfg.in_channels));
  fill_uniform(p.proj_w, b, rng);
  fill_uniform(p.proj_b, b, rng);
  if (!cfg.drop_trend) {
    for (long k : cfg.kernel_sizes) {
      Tensor kt({k, cfg.d_model, cfg.d_trend()});
      fill_uniform(kt, 1.0 / std::sqrt(static_cast<double>(k * cfg.d_model)), rng);
      p.trend_kernels.push_back(std::move(kt));
    }
  }
  if (!cfg.drop_periodicity) {
    p.periodic_w = Tensor({cfg.freq_bins(), cfg.d_model, cfg.d_periodic()},
                          /*complex=*/true);
    fill_uniform(p.periodic_w, 1.0 / std::sqrt(static_cast<double>(cfg.d_model)), rng);
  }
  return p;
}

void BackboneParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("proj_w", proj_w);
  fn("proj_b", proj_b);
  for (size_t i = 0; i < trend_kernels.size(); ++i)
    fn("trend_kernel_" + std::to_string(i), trend_kernels[i]);
  if (!periodic_w.empty()) fn("periodic_w", periodic_w);
}

void BackboneParams::for_each(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<BackboneParams*>(this)->for_each(
      [&](const std::string& n, Tensor& t) { fn(n, t); });
}

bool BackboneParams::same_shapes(const BackboneParams& o) const {
  if (!proj_w.same_shape(o.proj_w) || !proj_b.same_shape(o.proj_b)) return false;
  if (trend_kernels.size() != o.trend_kernels.size()) return false;
  for (size_t i = 0; i < trend_kernels.size(); ++i)
    if (!trend_kernels[i].same_shape(o.trend_kernels[i])) return false;
  if (periodic_w.empty() != o.periodic_w.empty()) return false;
  if (!periodic_w.empty() && !periodic_w.same_shape(o.periodic_w)) return false;
  return true;
}

ParamNodes ParamNodes::from(const BackboneParams& p, bool requires_grad) {
  ParamNodes n;
  n.proj_w = ad::leaf(p.proj_w, requires_grad);
  n.proj_b = ad::leaf(p.proj_b, requires_grad);
  for (const Tensor& k : p.trend_kernels) n.trend_kernels.push_back(ad::leaf(k, requires_grad));
  if (!p.periodic_w.empty()) n.periodic_w = ad::leaf(p.periodic_w, requires_grad);
  return n;
}

namespace {

using ad::ValuePtr;

ValuePtr trend_branch(const ValuePtr& h, const ParamNodes& params,
                      const BackboneConfig& cfg, TimeReduce reduce) {
  // h: [B x Lh x d_model]; Lh is the full window for pooled modes or just the
  // last max_kernel() steps for the final-step fast path.
  const long lh = h->data.dim(1);
  const bool last_only = (reduce == TimeReduce::last &&
                          cfg.trend_pool == BackboneConfig::TrendPool::branches);
  ValuePtr acc;
  for (size_t i = 0; i < cfg.kernel_sizes.size(); ++i) {
    const long k = cfg.kernel_sizes[i];
    ValuePtr yk;
    if (last_only) {
      // Final-step output of a causal conv = flattened matmul over the last
      // k inputs; identical to conv1d_causal + select_index(L-1).
      ValuePtr tail = ad::narrow(h, 1, lh - k, k);
      ValuePtr flat = ad::reshape(tail, {h->data.dim(0), k * cfg.d_model});
      ValuePtr kmat = ad::reshape(params.trend_kernels[i], {k * cfg.d_model, cfg.d_trend()});
      yk = ad::matmul(flat, kmat);  // [B x d_trend]
    } else {
      yk = ad::conv1d_causal(h, params.trend_kernels[i]);  // [B x Lh x d_trend]
    }
    acc = acc ? ad::add(acc, yk) : yk;
  }
  ValuePtr pooled = ad::scale(acc, 1.0 / static_cast<double>(cfg.kernel_sizes.size()));
  if (last_only) return pooled;
  if (cfg.trend_pool == BackboneConfig::TrendPool::time || reduce == TimeReduce::mean)
    return ad::mean_over(pooled, 1);
  return ad::select_index(pooled, 1, lh - 1);
}

ValuePtr periodic_branch(const ValuePtr& h, const ParamNodes& params,
                         const BackboneConfig& cfg, TimeReduce reduce) {
  ValuePtr z = ad::rfft(h);  // [B x F x d_model] complex
  if (reduce == TimeReduce::last)
    return ad::complex_linear_irfft_at(z, params.periodic_w, cfg.l_in, cfg.l_in - 1);
  ValuePtr y = ad::irfft(ad::complex_linear(z, params.periodic_w), cfg.l_in);
  return ad::mean_over(y, 1);
}

}  // namespace

ad::ValuePtr encode_node(const ad::ValuePtr& periodic, const ad::ValuePtr& trend,
                         const ParamNodes& params, const BackboneConfig& cfg,
                         TimeReduce reduce) {
  cfg.validate();
  check_shape(periodic->data.rank() == 3 && trend->data.rank() == 3 &&
                  periodic->data.dim(1) == cfg.l_in && trend->data.dim(1) == cfg.l_in &&
                  periodic->data.dim(2) == cfg.in_channels &&
                  trend->data.dim(2) == cfg.in_channels,
              "encode: components must be [B x " + std::to_string(cfg.l_in) + " x " +
                  std::to_string(cfg.in_channels) + "], got " +
                  periodic->data.shape_str() + " and " + trend->data.shape_str());

  std::vector<ValuePtr> parts;
  if (!cfg.drop_trend) {
    ValuePtr tin = trend;
    if (reduce == TimeReduce::last &&
        cfg.trend_pool == BackboneConfig::TrendPool::branches && cfg.l_in > cfg.max_kernel())
      tin = ad::narrow(trend, 1, cfg.l_in - cfg.max_kernel(), cfg.max_kernel());
    ValuePtr ht = ad::linear(tin, params.proj_w, params.proj_b);
    parts.push_back(trend_branch(ht, params, cfg, reduce));
  }
  if (!cfg.drop_periodicity) {
    ValuePtr hp = ad::linear(periodic, params.proj_w, params.proj_b);
    parts.push_back(periodic_branch(hp, params, cfg, reduce));
  }
  return parts.size() == 1 ? parts[0] : ad::concat(parts, 1);
}

Tensor encode(const Tensor& periodic, const Tensor& trend, const BackboneParams& p,
              const BackboneConfig& cfg, TimeReduce reduce) {
  ParamNodes nodes = ParamNodes::from(p, /*requires_grad=*/false);
  ad::ValuePtr rep = encode_node(ad::constant(periodic), ad::constant(trend), nodes, cfg, reduce);
  if (!rep->data.all_finite())
    throw NonFiniteError("encode produced non-finite activations");
  return rep->data;
}

Tensor encode_windows(const std::vector<const Tensor*>& windows,
                      const BackboneParams& p, const BackboneConfig& cfg) {
  const long n = static_cast<long>(windows.size());
  check_shape(n > 0, "encode_windows: empty batch");
  Tensor out({n, cfg.d_rep});
  constexpr long kChunk = 256;  // bounds intermediate activation memory
  for (long base = 0; base < n; base += kChunk) {
    const long b = std::min(kChunk, n - base);
    Tensor batch({b, cfg.l_in, cfg.in_channels});
    for (long i = 0; i < b; ++i) {
      const Tensor& w = *windows[static_cast<size_t>(base + i)];
      check_shape(w.dim(0) == cfg.l_in && w.dim(1) == cfg.in_channels,
                  "encode_windows: window " + w.shape_str() + " does not match config");
      std::copy(w.data(), w.data() + w.value_count(),
                batch.data() + i * cfg.l_in * cfg.in_channels);
    }
    Tensor reps = encode(batch, batch, p, cfg);
    std::copy(reps.data(), reps.data() + b * cfg.d_rep, out.data() + base * cfg.d_rep);
  }
  return out;
}

std::vector<std::pair<long, std::vector<double>>> encode_series(
    std::span<const double> x, const BackboneParams& p, const BackboneConfig& cfg,
    long stride) {
  const long n = static_cast<long>(x.size());
  if (n < cfg.l_in)
    throw WindowTooLongError("series length " + std::to_string(n) +
                             " shorter than window " + std::to_string(cfg.l_in));
  check_shape(cfg.in_channels == 1, "encode_series expects a single-variable config");
  if (stride < 1) throw ConfigError("encode_series: stride must be >= 1");

  std::vector<long> ends;
  for (long t = cfg.l_in - 1; t < n; t += stride) ends.push_back(t);

  std::vector<std::pair<long, std::vector<double>>> out;
  out.reserve(ends.size());
  constexpr long kChunk = 128;
  for (size_t base = 0; base < ends.size(); base += kChunk) {
    const long b = std::min<long>(kChunk, static_cast<long>(ends.size() - base));
    Tensor batch({b, cfg.l_in, 1});
    for (long i = 0; i < b; ++i) {
      long start = ends[base + static_cast<size_t>(i)] - cfg.l_in + 1;
      std::copy(x.begin() + start, x.begin() + start + cfg.l_in,
                batch.data() + i * cfg.l_in);
    }
    Tensor reps = encode(batch, batch, p, cfg);
    for (long i = 0; i < b; ++i) {
      std::vector<double> r(static_cast<size_t>(cfg.d_rep));
      for (long j = 0; j < cfg.d_rep; ++j) r[static_cast<size_t>(j)] = reps.raw(i * cfg.d_rep + j);
      out.emplace_back(ends[base + static_cast<size_t>(i)], std::move(r));
    }
  }
  return out;
}

}  // namespace tscast
