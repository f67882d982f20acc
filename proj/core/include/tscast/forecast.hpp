#pragma once

#include <span>
#include <string>
#include <vector>

#include "tscast/backbone.hpp"
#include "tscast/data.hpp"
#include "tscast/tensor.hpp"

namespace tscast {

// L2-regularized linear map from representations to the next T values.
struct RidgeModel {
  Tensor w;  // [D x T]
  Tensor b;  // [T]
  double alpha = 0.0;
  long horizon = 0;
};

// Streaming normal-equation accumulator: Gram matrix, cross products and
// means collected in one pass so the full representation matrix never has to
// be materialized. Centered quantities are recovered at solve time.
class RidgeAccumulator {
public:
  RidgeAccumulator(long d, long t);
  void add(const Tensor& r, const Tensor& y);  // r: [M x D], y: [M x T]
  RidgeModel solve(double alpha) const;        // Cholesky on (Gram + alpha I)
  long rows() const { return count_; }

private:
  long d_, t_, count_ = 0;
  std::vector<double> gram_;   // [D x D], sum r r^T
  std::vector<double> cross_;  // [D x T], sum r y^T
  std::vector<double> sum_r_, sum_y_;
};

RidgeModel fit_ridge(const Tensor& r, const Tensor& y, double alpha);
// alpha = 0 with a minimum-norm fallback on rank deficiency.
RidgeModel fit_linear(const Tensor& r, const Tensor& y);

Tensor predict(const RidgeModel& model, const Tensor& r);

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
};
Metrics mse_mae(const Tensor& pred, const Tensor& target);

// Grid search on validation MSE after fitting on the train representations;
// ties resolve to the smaller alpha.
double select_alpha(const Tensor& r_train, const Tensor& y_train, const Tensor& r_val,
                    const Tensor& y_val, std::span<const double> grid);

struct ForecastReport {
  int schema_version = 1;
  std::string dataset_id;
  long horizon = 0;
  std::string split = "test";
  std::string protocol;  // "multivariate" | "univariate"
  double mse = 0.0;
  double mae = 0.0;
  double alpha_selected = 0.0;
  std::string seed;  // numeric, or "mean" for the aggregate row
  std::string config_fingerprint;
};

struct EvalSettings {
  std::string dataset_id;
  std::vector<long> horizons{24, 48, 168, 336, 720};
  std::vector<double> alpha_grid{0.1, 0.2, 0.5, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000};
  bool multivariate = true;
  bool univariate = false;
  std::string target_variable;  // univariate protocol target (name)
  bool origin_data = false;     // feed raw windows instead of representations
  bool linear_head = false;     // alpha = 0 head instead of the ridge grid
  bool channel_mix = false;
  std::string seed_label = "0";
  std::string config_fingerprint;
};

// Per horizon: encode train/val/test windows with the frozen encoder, fit on
// train, select alpha on val, report test MSE/MAE on the normalized scale.
std::vector<ForecastReport> evaluate(const BackboneParams& params,
                                     const BackboneConfig& cfg, const SeriesDataset& ds,
                                     const EvalSettings& settings);

}  // namespace tscast
