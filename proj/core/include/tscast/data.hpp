#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "tscast/rng.hpp"
#include "tscast/tensor.hpp"

namespace tscast {

struct SplitRange {
  long begin = 0;
  long end = 0;
  long length() const { return end - begin; }
};

// Split boundaries, either month counts (fixed steps per month) or
// fractional ratios of the total length. The last range absorbs any tail so
// the three ranges always cover [0, L_total).
struct SplitSpec {
  enum class Kind { months, ratios };
  Kind kind = Kind::ratios;
  double train = 0.6, val = 0.2, test = 0.2;
  long steps_per_month = 720;  // hourly data, 30-day months

  static SplitSpec months(double tr, double va, double te, long spm = 720);
  static SplitSpec ratios(double tr, double va, double te);
  static SplitSpec parse(const std::string& text);  // "months:12/4/4" | "ratio:0.6/0.2/0.2"
  std::string str() const;
};

// Normalized multivariate series with split boundaries and the per-variable
// train statistics used for the z-scoring.
struct SeriesDataset {
  Tensor values;  // [L_total x C], z-scored with train-range stats
  std::vector<std::string> variable_names;
  SplitRange train, val, test;
  std::vector<double> train_mean, train_std;

  long length() const { return values.rank() ? values.dim(0) : 0; }
  long channels() const { return values.rank() ? values.dim(1) : 0; }
  const SplitRange& range(std::string_view name) const;
  long variable_index(std::string_view name) const;  // -1 if absent

  double normalized(long t, long c) const { return values.raw(t * channels() + c); }
  double denormalize(double v, long c) const { return v * train_std[static_cast<size_t>(c)] + train_mean[static_cast<size_t>(c)]; }
  double renormalize(double v, long c) const { return (v - train_mean[static_cast<size_t>(c)]) / train_std[static_cast<size_t>(c)]; }
};

// One training crop: a single variable's values in channel-independent mode
// (variable_index >= 0) or an [L_in x C] slab in the channel-mix ablation
// (variable_index == -1).
struct Window {
  Tensor series;  // [L_in x C_w]
  long variable_index = 0;
  long start = 0;

  long l_in() const { return series.dim(0); }
  long width() const { return series.dim(1); }
};

struct EvalPair {
  Window window;
  Tensor target;  // [T] (channel independent) or [T x C] (channel mix)
};

SeriesDataset ingest_csv(const std::string& path, const std::string& timestamp_column,
                         const SplitSpec& split);

// Shared ingest tail: split + train-stat z-scoring over already-parsed
// values. Also the entry point for the synthetic generator and tests.
SeriesDataset dataset_from_values(Tensor raw_values, std::vector<std::string> names,
                                  const SplitSpec& split);

std::vector<Window> sample_windows(const SeriesDataset& ds, std::string_view range,
                                   long count, long l_in, Rng& rng,
                                   bool channel_mix = false);

// Stride-1 enumeration of (window, next-horizon target) pairs, both fully
// inside the named range. `variable` restricts to one variable (univariate
// protocol); -1 enumerates all variables.
std::vector<EvalPair> enumerate_eval_windows(const SeriesDataset& ds,
                                             std::string_view range, long l_in,
                                             long horizon, bool channel_mix = false,
                                             long variable = -1);

}  // namespace tscast
