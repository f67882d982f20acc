#include "tscast/augment.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numeric>

#include "tscast/errors.hpp"
#include "tscast/fft.hpp"

namespace tscast {

void AugmentConfig::validate(long l_in) const {
  if (!(1 <= k1 && k1 <= k2))
    throw ConfigError("augment: need 1 <= k1 <= k2, got k1=" + std::to_string(k1) +
                      " k2=" + std::to_string(k2));
  if (!(0 <= t1 && t1 <= t2))
    throw ConfigError("augment: need 0 <= t1 <= t2, got t1=" + std::to_string(t1) +
                      " t2=" + std::to_string(t2));
  const long bins = l_in / 2 + 1;
  if (k2 > bins)
    throw ConfigError("augment: k2=" + std::to_string(k2) + " exceeds the " +
                      std::to_string(bins) + " spectrum bins of length " +
                      std::to_string(l_in));
  if (2 * t2 + 1 > l_in)
    throw ConfigError("augment: window 2*t2+1=" + std::to_string(2 * t2 + 1) +
                      " exceeds series length " + std::to_string(l_in));
}

std::vector<double> periodic_sample(std::span<const double> x, long k) {
  const size_t n = x.size();
  const long bins = static_cast<long>(fft::rfft_bins(n));
  if (k < 1 || k > bins)
    throw FrequencyCountError("k=" + std::to_string(k) + " outside [1, " +
                              std::to_string(bins) + "] for length " +
                              std::to_string(n));
  std::vector<std::complex<double>> spec(static_cast<size_t>(bins));
  fft::rfft(x.data(), n, spec.data());

  std::vector<long> idx(static_cast<size_t>(bins));
  std::iota(idx.begin(), idx.end(), 0l);
  std::vector<double> amp(static_cast<size_t>(bins));
  for (long i = 0; i < bins; ++i) amp[static_cast<size_t>(i)] = std::abs(spec[static_cast<size_t>(i)]);
  // ties -> lower bin index first
  std::stable_sort(idx.begin(), idx.end(), [&](long a, long b) {
    if (amp[static_cast<size_t>(a)] != amp[static_cast<size_t>(b)])
      return amp[static_cast<size_t>(a)] > amp[static_cast<size_t>(b)];
    return a < b;
  });
  std::vector<char> keep(static_cast<size_t>(bins), 0);
  for (long i = 0; i < k; ++i) keep[static_cast<size_t>(idx[static_cast<size_t>(i)])] = 1;
  for (long i = 0; i < bins; ++i)
    if (!keep[static_cast<size_t>(i)]) spec[static_cast<size_t>(i)] = 0.0;

  std::vector<double> out(n);
  fft::irfft(spec.data(), n, out.data());
  return out;
}

std::vector<double> trend_sample(std::span<const double> x, long t) {
  const long n = static_cast<long>(x.size());
  if (t < 0) throw WindowSizeError("t must be >= 0, got " + std::to_string(t));
  if (2 * t + 1 > n)
    throw WindowSizeError("window 2t+1=" + std::to_string(2 * t + 1) +
                          " exceeds series length " + std::to_string(n));
  std::vector<double> out(static_cast<size_t>(n));
  const double inv = 1.0 / static_cast<double>(2 * t + 1);
  for (long i = 0; i < n; ++i) {
    double s = 0;
    for (long j = i - t; j <= i + t; ++j)
      s += x[static_cast<size_t>(std::clamp(j, 0l, n - 1))];
    out[static_cast<size_t>(i)] = s * inv;
  }
  return out;
}

std::vector<double> common_transform(std::span<const double> x, Rng& rng) {
  double s = std::clamp(rng.normal(1.0, 0.5), 0.1, 2.0);
  double m = rng.normal(0.0, 0.5);
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = s * x[i] + m + rng.normal(0.0, 0.3);
  return out;
}

namespace {

long draw_in(Rng& rng, long lo, long hi) { return rng.uniform_int(lo, hi); }

long draw_distinct(Rng& rng, long lo, long hi, long other) {
  if (lo >= hi) return draw_in(rng, lo, hi);  // degenerate range, equality unavoidable
  long v = draw_in(rng, lo, hi);
  while (v == other) v = draw_in(rng, lo, hi);
  return v;
}

Tensor per_column(const Tensor& series, const std::function<std::vector<double>(std::span<const double>)>& f) {
  const long l = series.dim(0), c = series.dim(1);
  Tensor out({l, c});
  std::vector<double> col(static_cast<size_t>(l));
  for (long j = 0; j < c; ++j) {
    for (long t = 0; t < l; ++t) col[static_cast<size_t>(t)] = series.raw(t * c + j);
    std::vector<double> r = f(col);
    for (long t = 0; t < l; ++t) out.raw(t * c + j) = r[static_cast<size_t>(t)];
  }
  return out;
}

void check_view_finite(const View& v, const char* which) {
  if (!v.periodic.all_finite() || !v.trend.all_finite())
    throw NonFiniteError(std::string("augmented view '") + which +
                         "' contains non-finite values");
}

}  // namespace

ViewPair make_view_pair(const Window& w, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate(w.l_in());
  ViewPair vp;
  if (cfg.mode == AugmentConfig::Mode::common_trans) {
    vp.q.periodic = per_column(w.series, [&](std::span<const double> c) {
      return common_transform(c, rng);
    });
    vp.q.trend = vp.q.periodic;
    vp.k.periodic = per_column(w.series, [&](std::span<const double> c) {
      return common_transform(c, rng);
    });
    vp.k.trend = vp.k.periodic;
  } else {
    vp.k_q = draw_in(rng, cfg.k1, cfg.k2);
    vp.k_k = cfg.strict_distinct ? draw_distinct(rng, cfg.k1, cfg.k2, vp.k_q)
                                 : draw_in(rng, cfg.k1, cfg.k2);
    vp.t_q = draw_in(rng, cfg.t1, cfg.t2);
    vp.t_k = cfg.strict_distinct ? draw_distinct(rng, cfg.t1, cfg.t2, vp.t_q)
                                 : draw_in(rng, cfg.t1, cfg.t2);
    vp.q.periodic = per_column(w.series, [&](std::span<const double> c) {
      return periodic_sample(c, vp.k_q);
    });
    vp.q.trend = per_column(w.series, [&](std::span<const double> c) {
      return trend_sample(c, vp.t_q);
    });
    vp.k.periodic = per_column(w.series, [&](std::span<const double> c) {
      return periodic_sample(c, vp.k_k);
    });
    vp.k.trend = per_column(w.series, [&](std::span<const double> c) {
      return trend_sample(c, vp.t_k);
    });
  }
  check_view_finite(vp.q, "q");
  check_view_finite(vp.k, "k");
  return vp;
}

}  // namespace tscast
