#include "tscast/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tscast/errors.hpp"

namespace tscast {

SplitSpec SplitSpec::months(double tr, double va, double te, long spm) {
  SplitSpec s;
  s.kind = Kind::months;
  s.train = tr;
  s.val = va;
  s.test = te;
  s.steps_per_month = spm;
  return s;
}

SplitSpec SplitSpec::ratios(double tr, double va, double te) {
  SplitSpec s;
  s.kind = Kind::ratios;
  s.train = tr;
  s.val = va;
  s.test = te;
  return s;
}

SplitSpec SplitSpec::parse(const std::string& text) {
  auto colon = text.find(':');
  if (colon == std::string::npos)
    throw ConfigError("split spec '" + text + "': want 'months:a/b/c' or 'ratio:a/b/c'");
  std::string kind = text.substr(0, colon);
  std::string rest = text.substr(colon + 1);
  double parts[3];
  std::stringstream ss(rest);
  std::string tok;
  for (int i = 0; i < 3; ++i) {
    if (!std::getline(ss, tok, '/'))
      throw ConfigError("split spec '" + text + "': need three '/'-separated values");
    try {
      parts[i] = std::stod(tok);
    } catch (const std::exception&) {
      throw ConfigError("split spec '" + text + "': bad number '" + tok + "'");
    }
  }
  if (kind == "months") return months(parts[0], parts[1], parts[2]);
  if (kind == "ratio" || kind == "ratios") return ratios(parts[0], parts[1], parts[2]);
  throw ConfigError("split spec '" + text + "': unknown kind '" + kind + "'");
}

std::string SplitSpec::str() const {
  std::ostringstream os;
  os << (kind == Kind::months ? "months:" : "ratio:") << train << "/" << val << "/" << test;
  if (kind == Kind::months) os << " spm=" << steps_per_month;
  return os.str();
}

const SplitRange& SeriesDataset::range(std::string_view name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw ConfigError("unknown split range '" + std::string(name) + "'");
}

long SeriesDataset::variable_index(std::string_view name) const {
  for (size_t i = 0; i < variable_names.size(); ++i)
    if (variable_names[i] == name) return static_cast<long>(i);
  return -1;
}

namespace {

void compute_split(const SplitSpec& spec, long l_total, SplitRange& train,
                   SplitRange& val, SplitRange& test) {
  long b1 = 0, b2 = 0;
  if (spec.kind == SplitSpec::Kind::months) {
    b1 = static_cast<long>(spec.train * static_cast<double>(spec.steps_per_month));
    b2 = b1 + static_cast<long>(spec.val * static_cast<double>(spec.steps_per_month));
  } else {
    b1 = static_cast<long>(std::llround(spec.train * static_cast<double>(l_total)));
    b2 = b1 + static_cast<long>(std::llround(spec.val * static_cast<double>(l_total)));
  }
  if (!(0 < b1 && b1 <= b2 && b2 <= l_total))
    throw ConfigError("split " + spec.str() + " does not fit series of length " +
                      std::to_string(l_total));
  train = {0, b1};
  val = {b1, b2};
  test = {b2, l_total};  // the test range absorbs any tail
}

}  // namespace

SeriesDataset dataset_from_values(Tensor raw_values, std::vector<std::string> names,
                                  const SplitSpec& split) {
  check_shape(raw_values.rank() == 2, "dataset values must be [L x C]");
  const long l = raw_values.dim(0), c = raw_values.dim(1);
  if (static_cast<long>(names.size()) != c)
    throw IngestError("have " + std::to_string(names.size()) + " variable names for " +
                      std::to_string(c) + " columns");

  SeriesDataset ds;
  compute_split(split, l, ds.train, ds.val, ds.test);
  ds.variable_names = std::move(names);
  ds.train_mean.assign(static_cast<size_t>(c), 0.0);
  ds.train_std.assign(static_cast<size_t>(c), 0.0);

  const long n_train = ds.train.length();
  for (long j = 0; j < c; ++j) {
    double mean = 0;
    for (long t = ds.train.begin; t < ds.train.end; ++t)
      mean += raw_values.raw(t * c + j);
    mean /= static_cast<double>(n_train);
    double var = 0;
    for (long t = ds.train.begin; t < ds.train.end; ++t) {
      double d = raw_values.raw(t * c + j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n_train);
    double sd = std::sqrt(var);
    if (!(sd > 0.0))
      throw ConstantVariableError("variable '" + ds.variable_names[static_cast<size_t>(j)] +
                                  "' is constant over the train range");
    ds.train_mean[static_cast<size_t>(j)] = mean;
    ds.train_std[static_cast<size_t>(j)] = sd;
  }

  for (long t = 0; t < l; ++t)
    for (long j = 0; j < c; ++j) {
      double& v = raw_values.raw(t * c + j);
      v = (v - ds.train_mean[static_cast<size_t>(j)]) / ds.train_std[static_cast<size_t>(j)];
    }
  ds.values = std::move(raw_values);
  return ds;
}

SeriesDataset ingest_csv(const std::string& path, const std::string& timestamp_column,
                         const SplitSpec& split) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw IngestError("'" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2)
    throw IngestError("'" + path + "': need a timestamp column plus at least one variable");

  long ts_col = 0;
  if (!timestamp_column.empty()) {
    ts_col = -1;
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == timestamp_column) ts_col = static_cast<long>(i);
    if (ts_col < 0)
      throw IngestError("'" + path + "': timestamp column '" + timestamp_column +
                        "' not found");
  }

  std::vector<std::string> names;
  for (size_t i = 0; i < header.size(); ++i)
    if (static_cast<long>(i) != ts_col) names.push_back(header[i]);
  const long c = static_cast<long>(names.size());

  std::vector<double> flat;
  long row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    size_t pos = 0;
    long col = 0, kept = 0;
    while (col < static_cast<long>(header.size())) {
      size_t next = line.find(',', pos);
      std::string_view cell(line.data() + pos,
                            (next == std::string::npos ? line.size() : next) - pos);
      if (col != ts_col) {
        double v = 0;
        auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc{} || p != cell.data() + cell.size() || !std::isfinite(v))
          throw IngestError("'" + path + "' row " + std::to_string(row) + " column '" +
                            header[static_cast<size_t>(col)] + "': not a finite number ('" +
                            std::string(cell) + "')");
        flat.push_back(v);
        ++kept;
      }
      if (next == std::string::npos) break;
      pos = next + 1;
      ++col;
    }
    if (kept != c)
      throw IngestError("'" + path + "' row " + std::to_string(row) + ": expected " +
                        std::to_string(header.size()) + " cells");
  }
  const long l = static_cast<long>(flat.size()) / c;
  if (l == 0) throw IngestError("'" + path + "': no data rows");
  return dataset_from_values(Tensor::from({l, c}, std::move(flat)), std::move(names), split);
}

std::vector<Window> sample_windows(const SeriesDataset& ds, std::string_view range,
                                   long count, long l_in, Rng& rng, bool channel_mix) {
  const SplitRange& r = ds.range(range);
  if (l_in > r.length())
    throw WindowTooLongError("window length " + std::to_string(l_in) +
                             " exceeds range '" + std::string(range) + "' length " +
                             std::to_string(r.length()));
  const long c = ds.channels();
  const long max_start = r.end - l_in;
  std::vector<Window> out;
  out.reserve(static_cast<size_t>(count));
  for (long i = 0; i < count; ++i) {
    long var = channel_mix ? -1 : rng.uniform_int(0, c - 1);
    long start = rng.uniform_int(r.begin, max_start);
    Window w;
    w.variable_index = var;
    w.start = start;
    if (channel_mix) {
      w.series = Tensor({l_in, c});
      for (long t = 0; t < l_in; ++t)
        for (long j = 0; j < c; ++j)
          w.series.raw(t * c + j) = ds.values.raw((start + t) * c + j);
    } else {
      w.series = Tensor({l_in, 1});
      for (long t = 0; t < l_in; ++t)
        w.series.raw(t) = ds.values.raw((start + t) * c + var);
    }
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<EvalPair> enumerate_eval_windows(const SeriesDataset& ds,
                                             std::string_view range, long l_in,
                                             long horizon, bool channel_mix,
                                             long variable) {
  const SplitRange& r = ds.range(range);
  if (l_in + horizon > r.length())
    throw WindowTooLongError("window " + std::to_string(l_in) + " + horizon " +
                             std::to_string(horizon) + " exceeds range '" +
                             std::string(range) + "' length " +
                             std::to_string(r.length()));
  const long c = ds.channels();
  const long n_starts = r.length() - l_in - horizon + 1;
  std::vector<EvalPair> out;
  if (channel_mix) {
    out.reserve(static_cast<size_t>(n_starts));
    for (long s = 0; s < n_starts; ++s) {
      const long start = r.begin + s;
      EvalPair p;
      p.window.variable_index = -1;
      p.window.start = start;
      p.window.series = Tensor({l_in, c});
      for (long t = 0; t < l_in; ++t)
        for (long j = 0; j < c; ++j)
          p.window.series.raw(t * c + j) = ds.values.raw((start + t) * c + j);
      p.target = Tensor({horizon, c});
      for (long t = 0; t < horizon; ++t)
        for (long j = 0; j < c; ++j)
          p.target.raw(t * c + j) = ds.values.raw((start + l_in + t) * c + j);
      out.push_back(std::move(p));
    }
    return out;
  }
  const long v0 = (variable >= 0) ? variable : 0;
  const long v1 = (variable >= 0) ? variable + 1 : c;
  out.reserve(static_cast<size_t>(n_starts * (v1 - v0)));
  for (long var = v0; var < v1; ++var)
    for (long s = 0; s < n_starts; ++s) {
      const long start = r.begin + s;
      EvalPair p;
      p.window.variable_index = var;
      p.window.start = start;
      p.window.series = Tensor({l_in, 1});
      for (long t = 0; t < l_in; ++t)
        p.window.series.raw(t) = ds.values.raw((start + t) * c + var);
      p.target = Tensor({horizon});
      for (long t = 0; t < horizon; ++t)
        p.target.raw(t) = ds.values.raw((start + l_in + t) * c + var);
      out.push_back(std::move(p));
    }
  return out;
}

}  // namespace tscast
