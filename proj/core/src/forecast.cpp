#include "tscast/forecast.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "tscast/errors.hpp"

namespace tscast {

namespace {
using RMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<RMat>;
using MapCR = Eigen::Map<const RMat>;
}  // namespace

RidgeAccumulator::RidgeAccumulator(long d, long t) : d_(d), t_(t) {
  gram_.assign(static_cast<size_t>(d * d), 0.0);
  cross_.assign(static_cast<size_t>(d * t), 0.0);
  sum_r_.assign(static_cast<size_t>(d), 0.0);
  sum_y_.assign(static_cast<size_t>(t), 0.0);
}

void RidgeAccumulator::add(const Tensor& r, const Tensor& y) {
  check_shape(r.rank() == 2 && y.rank() == 2 && r.dim(1) == d_ && y.dim(1) == t_ &&
                  r.dim(0) == y.dim(0),
              "ridge: incompatible blocks " + r.shape_str() + ", " + y.shape_str());
  if (!r.all_finite() || !y.all_finite())
    throw NonFiniteError("ridge: non-finite values in the regression inputs");
  const long m = r.dim(0);
  MapCR rm(r.data(), m, d_), ym(y.data(), m, t_);
  MapR(gram_.data(), d_, d_).noalias() += rm.transpose() * rm;
  MapR(cross_.data(), d_, t_).noalias() += rm.transpose() * ym;
  Eigen::Map<Eigen::VectorXd>(sum_r_.data(), d_) += rm.colwise().sum().transpose();
  Eigen::Map<Eigen::VectorXd>(sum_y_.data(), t_) += ym.colwise().sum().transpose();
  count_ += m;
}

RidgeModel RidgeAccumulator::solve(double alpha) const {
  if (alpha < 0.0) throw ConfigError("ridge: alpha must be >= 0");
  if (count_ < 1) throw ConfigError("ridge: no rows accumulated");
  const double n = static_cast<double>(count_);
  Eigen::Map<const Eigen::VectorXd> mr(sum_r_.data(), d_), my(sum_y_.data(), t_);
  Eigen::VectorXd mean_r = mr / n;
  Eigen::VectorXd mean_y = my / n;

  // centered Gram: sum (r - mu)(r - mu)^T = G - n mu mu^T
  RMat g = MapCR(gram_.data(), d_, d_);
  g.noalias() -= n * mean_r * mean_r.transpose();
  RMat c = MapCR(cross_.data(), d_, t_);
  c.noalias() -= n * mean_r * mean_y.transpose();
  for (long i = 0; i < d_; ++i) g(i, i) += alpha;

  Eigen::LLT<RMat> llt(g);
  if (llt.info() != Eigen::Success) {
    if (alpha == 0.0)
      throw SingularMatrixError(
          "ridge: singular normal equations at alpha=0; use alpha > 0 or fit_linear");
    throw SingularMatrixError("ridge: Cholesky factorization failed");
  }
  RMat w = llt.solve(c);

  RidgeModel model;
  model.alpha = alpha;
  model.horizon = t_;
  model.w = Tensor::from({d_, t_}, std::vector<double>(w.data(), w.data() + d_ * t_));
  Eigen::VectorXd b = mean_y - w.transpose() * mean_r;
  model.b = Tensor::from({t_}, std::vector<double>(b.data(), b.data() + t_));
  if (!model.w.all_finite() || !model.b.all_finite())
    throw NonFiniteError("ridge: non-finite solution");
  return model;
}

RidgeModel fit_ridge(const Tensor& r, const Tensor& y, double alpha) {
  check_shape(r.rank() == 2 && y.rank() == 2 && r.dim(0) == y.dim(0),
              "fit_ridge: want [M x D] and [M x T], got " + r.shape_str() + ", " +
                  y.shape_str());
  if (r.dim(0) < 1) throw ConfigError("fit_ridge: need at least one row");
  RidgeAccumulator acc(r.dim(1), y.dim(1));
  acc.add(r, y);
  return acc.solve(alpha);
}

RidgeModel fit_linear(const Tensor& r, const Tensor& y) {
  try {
    return fit_ridge(r, y, 0.0);
  } catch (const SingularMatrixError&) {
    // rank-deficient: minimum-norm least squares on centered data
    const long m = r.dim(0), d = r.dim(1), t = y.dim(1);
    MapCR rm(r.data(), m, d), ym(y.data(), m, t);
    Eigen::RowVectorXd mean_r = rm.colwise().mean();
    Eigen::RowVectorXd mean_y = ym.colwise().mean();
    RMat rc = rm.rowwise() - mean_r;
    RMat yc = ym.rowwise() - mean_y;
    auto cod = rc.completeOrthogonalDecomposition();
    RMat w = cod.solve(yc);
    RidgeModel model;
    model.alpha = 0.0;
    model.horizon = t;
    model.w = Tensor::from({d, t}, std::vector<double>(w.data(), w.data() + d * t));
    Eigen::VectorXd b = mean_y.transpose() - w.transpose() * mean_r.transpose();
    model.b = Tensor::from({t}, std::vector<double>(b.data(), b.data() + t));
    return model;
  }
}

Tensor predict(const RidgeModel& model, const Tensor& r) {
  const long d = model.w.dim(0), t = model.w.dim(1);
  check_shape(r.rank() == 2 && r.dim(1) == d,
              "predict: representations " + r.shape_str() + " incompatible with model [" +
                  std::to_string(d) + " x " + std::to_string(t) + "]");
  const long m = r.dim(0);
  Tensor out({m, t});
  MapR y(out.data(), m, t);
  y.noalias() = MapCR(r.data(), m, d) * MapCR(model.w.data(), d, t);
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(model.b.data(), t);
  return out;
}

Metrics mse_mae(const Tensor& pred, const Tensor& target) {
  check_shape(pred.same_shape(target), "mse_mae: shape mismatch " + pred.shape_str() +
                                           " vs " + target.shape_str());
  const long n = pred.value_count();
  if (n == 0) throw ConfigError("mse_mae: empty inputs");
  double se = 0, ae = 0;
  for (long i = 0; i < n; ++i) {
    double e = pred.raw(i) - target.raw(i);
    se += e * e;
    ae += std::abs(e);
  }
  return {se / static_cast<double>(n), ae / static_cast<double>(n)};
}

double select_alpha(const Tensor& r_train, const Tensor& y_train, const Tensor& r_val,
                    const Tensor& y_val, std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("select_alpha: empty grid");
  RidgeAccumulator acc(r_train.dim(1), y_train.dim(1));
  acc.add(r_train, y_train);
  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());
  double best_alpha = sorted.front();
  double best_mse = std::numeric_limits<double>::infinity();
  for (double a : sorted) {
    RidgeModel m = acc.solve(a);
    double mse = mse_mae(predict(m, r_val), y_val).mse;
    if (mse < best_mse) {  // strict: ties keep the smaller alpha
      best_mse = mse;
      best_alpha = a;
    }
  }
  return best_alpha;
}

namespace {

// Representations (or raw windows for the origin-data ablation) of every
// eval pair in a range, plus the stacked targets.
struct RangeData {
  Tensor features;  // [M x D]
  Tensor targets;   // [M x T_flat]
};

RangeData featurize(const std::vector<EvalPair>& pairs, const BackboneParams& params,
                    const BackboneConfig& cfg, bool origin_data) {
  const long m = static_cast<long>(pairs.size());
  check_shape(m > 0, "evaluate: no eval windows");
  const long t_flat = pairs[0].target.numel();
  RangeData rd;
  rd.targets = Tensor({m, t_flat});
  for (long i = 0; i < m; ++i)
    std::copy(pairs[static_cast<size_t>(i)].target.data(),
              pairs[static_cast<size_t>(i)].target.data() + t_flat,
              rd.targets.data() + i * t_flat);
  if (origin_data) {
    const long d = pairs[0].window.series.numel();
    rd.features = Tensor({m, d});
    for (long i = 0; i < m; ++i)
      std::copy(pairs[static_cast<size_t>(i)].window.series.data(),
                pairs[static_cast<size_t>(i)].window.series.data() + d,
                rd.features.data() + i * d);
    return rd;
  }
  std::vector<const Tensor*> windows;
  windows.reserve(static_cast<size_t>(m));
  for (const auto& p : pairs) windows.push_back(&p.window.series);
  rd.features = encode_windows(windows, params, cfg);
  return rd;
}

ForecastReport run_protocol(const BackboneParams& params, const BackboneConfig& cfg,
                            const SeriesDataset& ds, const EvalSettings& s, long horizon,
                            const std::string& protocol, long variable) {
  auto train_pairs = enumerate_eval_windows(ds, "train", cfg.l_in, horizon, s.channel_mix, variable);
  auto val_pairs = enumerate_eval_windows(ds, "val", cfg.l_in, horizon, s.channel_mix, variable);
  auto test_pairs = enumerate_eval_windows(ds, "test", cfg.l_in, horizon, s.channel_mix, variable);

  RangeData train = featurize(train_pairs, params, cfg, s.origin_data);
  RangeData val = featurize(val_pairs, params, cfg, s.origin_data);
  RangeData test = featurize(test_pairs, params, cfg, s.origin_data);

  RidgeModel model;
  double alpha = 0.0;
  if (s.linear_head) {
    model = fit_linear(train.features, train.targets);
  } else {
    alpha = select_alpha(train.features, train.targets, val.features, val.targets,
                         s.alpha_grid);
    model = fit_ridge(train.features, train.targets, alpha);
  }
  Metrics m = mse_mae(predict(model, test.features), test.targets);

  ForecastReport rep;
  rep.dataset_id = s.dataset_id;
  rep.horizon = horizon;
  rep.protocol = protocol;
  rep.mse = m.mse;
  rep.mae = m.mae;
  rep.alpha_selected = alpha;
  rep.seed = s.seed_label;
  rep.config_fingerprint = s.config_fingerprint;
  return rep;
}

}  // namespace

std::vector<ForecastReport> evaluate(const BackboneParams& params,
                                     const BackboneConfig& cfg, const SeriesDataset& ds,
                                     const EvalSettings& settings) {
  std::vector<ForecastReport> out;
  for (long horizon : settings.horizons) {
    if (settings.multivariate)
      out.push_back(run_protocol(params, cfg, ds, settings, horizon, "multivariate", -1));
    if (settings.univariate) {
      long var = ds.variable_index(settings.target_variable);
      if (var < 0)
        throw ConfigError("univariate protocol: target variable '" +
                          settings.target_variable + "' not in dataset");
      if (settings.channel_mix)
        throw ConfigError("univariate protocol is not defined for channel-mix windows");
      out.push_back(run_protocol(params, cfg, ds, settings, horizon, "univariate", var));
    }
  }
  return out;
}

}  // namespace tscast
