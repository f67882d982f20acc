#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "tscast/errors.hpp"

namespace tscast {

// Dense row-major tensor of doubles with an explicit shape. Complex tensors
// store interleaved (re, im) pairs: numel() counts logical elements,
// value_count() counts raw doubles (2x for complex).
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(std::vector<long> dims, bool complex_pairs = false)
      : dims_(std::move(dims)), complex_(complex_pairs) {
    data_.assign(static_cast<size_t>(value_count()), 0.0);
  }

  static Tensor scalar(double v) {
    Tensor t(std::vector<long>{});
    t.data_[0] = v;
    return t;
  }

  static Tensor from(std::vector<long> dims, std::vector<double> values,
                     bool complex_pairs = false) {
    Tensor t;
    t.dims_ = std::move(dims);
    t.complex_ = complex_pairs;
    if (static_cast<long>(values.size()) != t.value_count())
      throw ShapeError("Tensor::from: value count does not match shape " + t.shape_str());
    t.data_ = std::move(values);
    return t;
  }

  long rank() const { return static_cast<long>(dims_.size()); }
  const std::vector<long>& dims() const { return dims_; }
  long dim(int i) const { return dims_[static_cast<size_t>(i)]; }
  bool is_complex() const { return complex_; }

  long numel() const {
    long n = 1;
    for (long d : dims_) n *= d;
    return n;
  }
  long value_count() const { return numel() * (complex_ ? 2 : 1); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& raw(long i) { return data_[static_cast<size_t>(i)]; }
  double raw(long i) const { return data_[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const {
    return dims_ == o.dims_ && complex_ == o.complex_;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) { data_.assign(data_.size(), v); }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < dims_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(dims_[i]);
    }
    s += complex_ ? "]c" : "]";
    return s;
  }

private:
  std::vector<long> dims_;
  bool complex_ = false;
  std::vector<double> data_;
};

inline void check_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace tscast
