#include "tscast/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <unordered_set>

#include "tscast/fft.hpp"

namespace tscast::ad {
namespace {

using RMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMat = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic,
                           Eigen::RowMajor>;
using MapR = Eigen::Map<RMat>;
using MapCR = Eigen::Map<const RMat>;
using Stride = Eigen::OuterStride<>;

ValuePtr make_node(const char* op, Tensor data, std::vector<ValuePtr> parents,
                   std::function<void(Value&)> fn) {
  auto v = std::make_shared<Value>();
  v->op = op;
  v->data = std::move(data);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  v->requires_grad = rg;
  if (rg) {
    v->parents = std::move(parents);
    v->backward_fn = std::move(fn);
  }
  return v;
}

struct AxisView {
  long outer = 1, len = 1, inner = 1;
};

AxisView axis_view(const std::vector<long>& dims, int axis) {
  if (axis < 0 || axis >= static_cast<int>(dims.size()))
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(dims.size()));
  AxisView v;
  for (int i = 0; i < axis; ++i) v.outer *= dims[static_cast<size_t>(i)];
  v.len = dims[static_cast<size_t>(axis)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < dims.size(); ++i) v.inner *= dims[i];
  return v;
}

void require_real(const ValuePtr& x, const char* op) {
  if (x->data.is_complex())
    throw ShapeError(std::string(op) + ": complex tensor not supported here");
}

const std::complex<double>* as_complex(const Tensor& t) {
  return reinterpret_cast<const std::complex<double>*>(t.data());
}
std::complex<double>* as_complex(Tensor& t) {
  return reinterpret_cast<std::complex<double>*>(t.data());
}

}  // namespace

ValuePtr leaf(Tensor t, bool requires_grad) {
  auto v = std::make_shared<Value>();
  v->data = std::move(t);
  v->requires_grad = requires_grad;
  return v;
}

ValuePtr constant(Tensor t) { return leaf(std::move(t), false); }

ValuePtr add(const ValuePtr& a, const ValuePtr& b) {
  check_shape(a->data.same_shape(b->data),
              "add: shape mismatch " + a->data.shape_str() + " vs " + b->data.shape_str());
  Tensor out = a->data;
  const long n = out.value_count();
  for (long i = 0; i < n; ++i) out.raw(i) += b->data.raw(i);
  Value* pa = a.get();
  Value* pb = b.get();
  return make_node("add", std::move(out), {a, b}, [pa, pb, n](Value& self) {
    if (pa->requires_grad) {
      Tensor& g = pa->ensure_grad();
      for (long i = 0; i < n; ++i) g.raw(i) += self.grad.raw(i);
    }
    if (pb->requires_grad) {
      Tensor& g = pb->ensure_grad();
      for (long i = 0; i < n; ++i) g.raw(i) += self.grad.raw(i);
    }
  });
}

ValuePtr sub(const ValuePtr& a, const ValuePtr& b) {
  check_shape(a->data.same_shape(b->data),
              "sub: shape mismatch " + a->data.shape_str() + " vs " + b->data.shape_str());
  Tensor out = a->data;
  const long n = out.value_count();
  for (long i = 0; i < n; ++i) out.raw(i) -= b->data.raw(i);
  Value* pa = a.get();
  Value* pb = b.get();
  return make_node("sub", std::move(out), {a, b}, [pa, pb, n](Value& self) {
    if (pa->requires_grad) {
      Tensor& g = pa->ensure_grad();
      for (long i = 0; i < n; ++i) g.raw(i) += self.grad.raw(i);
    }
    if (pb->requires_grad) {
      Tensor& g = pb->ensure_grad();
      for (long i = 0; i < n; ++i) g.raw(i) -= self.grad.raw(i);
    }
  });
}

ValuePtr mul(const ValuePtr& a, const ValuePtr& b) {
  require_real(a, "mul");
  require_real(b, "mul");
  check_shape(a->data.same_shape(b->data),
              "mul: shape mismatch " + a->data.shape_str() + " vs " + b->data.shape_str());
  Tensor out = a->data;
  const long n = out.value_count();
  for (long i = 0; i < n; ++i) out.raw(i) *= b->data.raw(i);
  Value* pa = a.get();
  Value* pb = b.get();
  return make_node("mul", std::move(out), {a, b}, [pa, pb, n](Value& self) {
    if (pa->requires_grad) {
      Tensor& g = pa->ensure_grad();
      for (long i = 0; i < n; ++i) g.raw(i) += self.grad.raw(i) * pb->data.raw(i);
    }
    if (pb->requires_grad) {
      Tensor& g = pb->ensure_grad();
      for (long i = 0; i < n; ++i) g.raw(i) += self.grad.raw(i) * pa->data.raw(i);
    }
  });
}

ValuePtr scale(const ValuePtr& a, double c) {
  Tensor out = a->data;
  const long n = out.value_count();
  for (long i = 0; i < n; ++i) out.raw(i) *= c;
  Value* pa = a.get();
  return make_node("scale", std::move(out), {a}, [pa, c, n](Value& self) {
    if (!pa->requires_grad) return;
    Tensor& g = pa->ensure_grad();
    for (long i = 0; i < n; ++i) g.raw(i) += self.grad.raw(i) * c;
  });
}

ValuePtr exp_elem(const ValuePtr& x) {
  require_real(x, "exp");
  Tensor out = x->data;
  const long n = out.value_count();
  for (long i = 0; i < n; ++i) out.raw(i) = std::exp(out.raw(i));
  Value* px = x.get();
  return make_node("exp", std::move(out), {x}, [px, n](Value& self) {
    if (!px->requires_grad) return;
    Tensor& g = px->ensure_grad();
    for (long i = 0; i < n; ++i) g.raw(i) += self.grad.raw(i) * self.data.raw(i);
  });
}

ValuePtr log_elem(const ValuePtr& x) {
  require_real(x, "log");
  Tensor out = x->data;
  const long n = out.value_count();
  for (long i = 0; i < n; ++i) out.raw(i) = std::log(out.raw(i));
  Value* px = x.get();
  return make_node("log", std::move(out), {x}, [px, n](Value& self) {
    if (!px->requires_grad) return;
    Tensor& g = px->ensure_grad();
    for (long i = 0; i < n; ++i) g.raw(i) += self.grad.raw(i) / px->data.raw(i);
  });
}

ValuePtr reshape(const ValuePtr& x, std::vector<long> dims) {
  long n = 1;
  for (long d : dims) n *= d;
  check_shape(n == x->data.numel(), "reshape: element count mismatch for " +
                                        x->data.shape_str());
  Tensor out = Tensor::from(std::move(dims),
                            std::vector<double>(x->data.data(),
                                                x->data.data() + x->data.value_count()),
                            x->data.is_complex());
  Value* px = x.get();
  const long vc = x->data.value_count();
  return make_node("reshape", std::move(out), {x}, [px, vc](Value& self) {
    if (!px->requires_grad) return;
    Tensor& g = px->ensure_grad();
    for (long i = 0; i < vc; ++i) g.raw(i) += self.grad.raw(i);
  });
}

ValuePtr narrow(const ValuePtr& x, int axis, long start, long len) {
  require_real(x, "narrow");
  AxisView v = axis_view(x->data.dims(), axis);
  check_shape(start >= 0 && len >= 1 && start + len <= v.len,
              "narrow: range [" + std::to_string(start) + ", " +
                  std::to_string(start + len) + ") out of bounds for " +
                  x->data.shape_str());
  std::vector<long> dims = x->data.dims();
  dims[static_cast<size_t>(axis)] = len;
  Tensor out(dims);
  for (long o = 0; o < v.outer; ++o)
    for (long i = 0; i < len; ++i)
      std::memcpy(out.data() + (o * len + i) * v.inner,
                  x->data.data() + (o * v.len + start + i) * v.inner,
                  static_cast<size_t>(v.inner) * sizeof(double));
  Value* px = x.get();
  return make_node("narrow", std::move(out), {x}, [px, v, start, len](Value& self) {
    if (!px->requires_grad) return;
    Tensor& g = px->ensure_grad();
    for (long o = 0; o < v.outer; ++o)
      for (long i = 0; i < len; ++i) {
        double* dst = g.data() + (o * v.len + start + i) * v.inner;
        const double* src = self.grad.data() + (o * len + i) * v.inner;
        for (long k = 0; k < v.inner; ++k) dst[k] += src[k];
      }
  });
}

ValuePtr select_index(const ValuePtr& x, int axis, long index) {
  require_real(x, "select_index");
  AxisView v = axis_view(x->data.dims(), axis);
  check_shape(index >= 0 && index < v.len,
              "select_index: index " + std::to_string(index) + " out of bounds for " +
                  x->data.shape_str());
  std::vector<long> dims;
  for (int i = 0; i < x->data.rank(); ++i)
    if (i != axis) dims.push_back(x->data.dim(i));
  Tensor out(dims);
  for (long o = 0; o < v.outer; ++o)
    std::memcpy(out.data() + o * v.inner,
                x->data.data() + (o * v.len + index) * v.inner,
                static_cast<size_t>(v.inner) * sizeof(double));
  Value* px = x.get();
  return make_node("select_index", std::move(out), {x}, [px, v, index](Value& self) {
    if (!px->requires_grad) return;
    Tensor& g = px->ensure_grad();
    for (long o = 0; o < v.outer; ++o) {
      double* dst = g.data() + (o * v.len + index) * v.inner;
      const double* src = self.grad.data() + o * v.inner;
      for (long k = 0; k < v.inner; ++k) dst[k] += src[k];
    }
  });
}

ValuePtr concat(const std::vector<ValuePtr>& xs, int axis) {
  check_shape(!xs.empty(), "concat: empty input list");
  const auto& first = xs[0]->data;
  long total = 0;
  for (const auto& x : xs) {
    require_real(x, "concat");
    check_shape(x->data.rank() == first.rank(), "concat: rank mismatch");
    for (int i = 0; i < first.rank(); ++i)
      if (i != axis)
        check_shape(x->data.dim(i) == first.dim(i),
                    "concat: dim mismatch at axis " + std::to_string(i));
    total += x->data.dim(axis);
  }
  std::vector<long> dims = first.dims();
  dims[static_cast<size_t>(axis)] = total;
  Tensor out(dims);
  AxisView vo = axis_view(dims, axis);
  long off = 0;
  for (const auto& x : xs) {
    AxisView vx = axis_view(x->data.dims(), axis);
    for (long o = 0; o < vx.outer; ++o)
      std::memcpy(out.data() + (o * vo.len + off) * vo.inner,
                  x->data.data() + o * vx.len * vx.inner,
                  static_cast<size_t>(vx.len * vx.inner) * sizeof(double));
    off += vx.len;
  }
  std::vector<ValuePtr> parents = xs;
  std::vector<Value*> raw;
  std::vector<long> lens;
  for (const auto& x : xs) {
    raw.push_back(x.get());
    lens.push_back(x->data.dim(axis));
  }
  return make_node("concat", std::move(out), std::move(parents),
                   [raw, lens, vo](Value& self) {
                     long off2 = 0;
                     for (size_t p = 0; p < raw.size(); ++p) {
                       if (raw[p]->requires_grad) {
                         Tensor& g = raw[p]->ensure_grad();
                         for (long o = 0; o < vo.outer; ++o) {
                           const double* src =
                               self.grad.data() + (o * vo.len + off2) * vo.inner;
                           double* dst = g.data() + o * lens[p] * vo.inner;
                           for (long k = 0; k < lens[p] * vo.inner; ++k) dst[k] += src[k];
                         }
                       }
                       off2 += lens[p];
                     }
                   });
}

ValuePtr sum_all(const ValuePtr& x) {
  require_real(x, "sum_all");
  double s = 0;
  const long n = x->data.value_count();
  for (long i = 0; i < n; ++i) s += x->data.raw(i);
  Value* px = x.get();
  return make_node("sum_all", Tensor::scalar(s), {x}, [px, n](Value& self) {
    if (!px->requires_grad) return;
    Tensor& g = px->ensure_grad();
    const double d = self.grad.raw(0);
    for (long i = 0; i < n; ++i) g.raw(i) += d;
  });
}

ValuePtr sum_axis(const ValuePtr& x, int axis) {
  require_real(x, "sum_axis");
  AxisView v = axis_view(x->data.dims(), axis);
  std::vector<long> dims;
  for (int i = 0; i < x->data.rank(); ++i)
    if (i != axis) dims.push_back(x->data.dim(i));
  Tensor out(dims);
  for (long o = 0; o < v.outer; ++o)
    for (long l = 0; l < v.len; ++l)
      for (long k = 0; k < v.inner; ++k)
        out.raw(o * v.inner + k) += x->data.raw((o * v.len + l) * v.inner + k);
  Value* px = x.get();
  return make_node("sum_axis", std::move(out), {x}, [px, v](Value& self) {
    if (!px->requires_grad) return;
    Tensor& g = px->ensure_grad();
    for (long o = 0; o < v.outer; ++o)
      for (long l = 0; l < v.len; ++l)
        for (long k = 0; k < v.inner; ++k)
          g.raw((o * v.len + l) * v.inner + k) += self.grad.raw(o * v.inner + k);
  });
}

ValuePtr mean_over(const ValuePtr& x, int axis) {
  AxisView v = axis_view(x->data.dims(), axis);
  return scale(sum_axis(x, axis), 1.0 / static_cast<double>(v.len));
}

ValuePtr l2_normalize(const ValuePtr& x, int axis) {
  require_real(x, "l2_normalize");
  constexpr double kEps = 1e-12;
  AxisView v = axis_view(x->data.dims(), axis);
  Tensor out(x->data.dims());
  for (long o = 0; o < v.outer; ++o)
    for (long k = 0; k < v.inner; ++k) {
      double ss = 0;
      for (long l = 0; l < v.len; ++l) {
        double xv = x->data.raw((o * v.len + l) * v.inner + k);
        ss += xv * xv;
      }
      double r = std::max(std::sqrt(ss), kEps);
      for (long l = 0; l < v.len; ++l) {
        long idx = (o * v.len + l) * v.inner + k;
        out.raw(idx) = x->data.raw(idx) / r;
      }
    }
  Value* px = x.get();
  return make_node("l2_normalize", std::move(out), {x}, [px, v](Value& self) {
    if (!px->requires_grad) return;
    Tensor& g = px->ensure_grad();
    for (long o = 0; o < v.outer; ++o)
      for (long k = 0; k < v.inner; ++k) {
        double ss = 0, dot = 0;
        for (long l = 0; l < v.len; ++l) {
          long idx = (o * v.len + l) * v.inner + k;
          double xv = px->data.raw(idx);
          ss += xv * xv;
          dot += self.grad.raw(idx) * self.data.raw(idx);
        }
        double r = std::max(std::sqrt(ss), kEps);
        for (long l = 0; l < v.len; ++l) {
          long idx = (o * v.len + l) * v.inner + k;
          g.raw(idx) += (self.grad.raw(idx) - self.data.raw(idx) * dot) / r;
        }
      }
  });
}

ValuePtr log_sum_exp_rows(const ValuePtr& x) {
  require_real(x, "log_sum_exp_rows");
  check_shape(x->data.rank() == 2, "log_sum_exp_rows: want rank 2, got " +
                                       x->data.shape_str());
  const long n = x->data.dim(0), m = x->data.dim(1);
  Tensor out({n});
  for (long i = 0; i < n; ++i) {
    double mx = x->data.raw(i * m);
    for (long j = 1; j < m; ++j) mx = std::max(mx, x->data.raw(i * m + j));
    double s = 0;
    for (long j = 0; j < m; ++j) s += std::exp(x->data.raw(i * m + j) - mx);
    out.raw(i) = mx + std::log(s);
  }
  Value* px = x.get();
  return make_node("log_sum_exp_rows", std::move(out), {x}, [px, n, m](Value& self) {
    if (!px->requires_grad) return;
    Tensor& g = px->ensure_grad();
    for (long i = 0; i < n; ++i) {
      const double lse = self.data.raw(i);
      const double d = self.grad.raw(i);
      for (long j = 0; j < m; ++j)
        g.raw(i * m + j) += d * std::exp(px->data.raw(i * m + j) - lse);
    }
  });
}

ValuePtr select_col(const ValuePtr& x, long col) {
  require_real(x, "select_col");
  check_shape(x->data.rank() == 2 && col >= 0 && col < x->data.dim(1),
              "select_col: bad column for " + x->data.shape_str());
  const long n = x->data.dim(0), m = x->data.dim(1);
  Tensor out({n});
  for (long i = 0; i < n; ++i) out.raw(i) = x->data.raw(i * m + col);
  Value* px = x.get();
  return make_node("select_col", std::move(out), {x}, [px, n, m, col](Value& self) {
    if (!px->requires_grad) return;
    Tensor& g = px->ensure_grad();
    for (long i = 0; i < n; ++i) g.raw(i * m + col) += self.grad.raw(i);
  });
}

ValuePtr matmul(const ValuePtr& a, const ValuePtr& b) {
  require_real(a, "matmul");
  require_real(b, "matmul");
  check_shape(a->data.rank() == 2 && b->data.rank() == 2 &&
                  a->data.dim(1) == b->data.dim(0),
              "matmul: incompatible " + a->data.shape_str() + " * " +
                  b->data.shape_str());
  const long m = a->data.dim(0), k = a->data.dim(1), n = b->data.dim(1);
  Tensor out({m, n});
  MapR(out.data(), m, n).noalias() =
      MapCR(a->data.data(), m, k) * MapCR(b->data.data(), k, n);
  Value* pa = a.get();
  Value* pb = b.get();
  return make_node("matmul", std::move(out), {a, b}, [pa, pb, m, k, n](Value& self) {
    MapCR dy(self.grad.data(), m, n);
    if (pa->requires_grad)
      MapR(pa->ensure_grad().data(), m, k).noalias() +=
          dy * MapCR(pb->data.data(), k, n).transpose();
    if (pb->requires_grad)
      MapR(pb->ensure_grad().data(), k, n).noalias() +=
          MapCR(pa->data.data(), m, k).transpose() * dy;
  });
}

ValuePtr linear(const ValuePtr& x, const ValuePtr& w, const ValuePtr& bias) {
  require_real(x, "linear");
  check_shape(x->data.rank() == 3, "linear: input must be [B x L x D_in], got " +
                                       x->data.shape_str());
  check_shape(w->data.rank() == 2 && bias->data.rank() == 1 &&
                  w->data.dim(0) == x->data.dim(2) && w->data.dim(1) == bias->data.dim(0),
              "linear: weight/bias mismatch " + w->data.shape_str() + ", " +
                  bias->data.shape_str() + " for input " + x->data.shape_str());
  const long b = x->data.dim(0), l = x->data.dim(1);
  const long di = w->data.dim(0), do = w->data.dim(1);
  const long rows = b * l;
  Tensor out({b, l, do});
  MapR y(out.data(), rows, do);
  y.noalias() = MapCR(x->data.data(), rows, di) * MapCR(w->data.data(), di, do);
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias->data.data(), do);
  Value* px = x.get();
  Value* pw = w.get();
  Value* pbias = bias.get();
  return make_node(
      "linear", std::move(out), {x, w, bias}, [px, pw, pbias, rows, di, do](Value& self) {
        MapCR dy(self.grad.data(), rows, do);
        if (px->requires_grad)
          MapR(px->ensure_grad().data(), rows, di).noalias() +=
              dy * MapCR(pw->data.data(), di, do).transpose();
        if (pw->requires_grad)
          MapR(pw->ensure_grad().data(), di, do).noalias() +=
              MapCR(px->data.data(), rows, di).transpose() * dy;
        if (pbias->requires_grad)
          Eigen::Map<Eigen::RowVectorXd>(pbias->ensure_grad().data(), do) +=
              dy.colwise().sum();
      });
}

ValuePtr conv1d_causal(const ValuePtr& x, const ValuePtr& kernel) {
  require_real(x, "conv1d_causal");
  check_shape(x->data.rank() == 3 && kernel->data.rank() == 3 &&
                  kernel->data.dim(1) == x->data.dim(2),
              "conv1d_causal: incompatible " + x->data.shape_str() + " with kernel " +
                  kernel->data.shape_str());
  const long b = x->data.dim(0), l = x->data.dim(1), d = x->data.dim(2);
  const long k = kernel->data.dim(0), dout = kernel->data.dim(2);
  check_shape(k >= 1, "conv1d_causal: kernel size must be >= 1");
  Tensor out({b, l, dout});
  const double* xd = x->data.data();
  const double* kd = kernel->data.data();
  double* yd = out.data();
  for (long bi = 0; bi < b; ++bi)
    for (long t = 0; t < l; ++t) {
      double* yrow = yd + (bi * l + t) * dout;
      for (long j = 0; j < k; ++j) {
        long ti = t - (k - 1) + j;
        if (ti < 0) continue;  // causal zero pad
        const double* xrow = xd + (bi * l + ti) * d;
        const double* krow = kd + j * d * dout;
        for (long di = 0; di < d; ++di) {
          const double xv = xrow[di];
          if (xv == 0.0) continue;
          const double* kslice = krow + di * dout;
          for (long o = 0; o < dout; ++o) yrow[o] += xv * kslice[o];
        }
      }
    }
  Value* px = x.get();
  Value* pk = kernel.get();
  return make_node(
      "conv1d_causal", std::move(out), {x, kernel},
      [px, pk, b, l, d, k, dout](Value& self) {
        const double* dy = self.grad.data();
        if (px->requires_grad) {
          Tensor& gx = px->ensure_grad();
          const double* kd2 = pk->data.data();
          for (long bi = 0; bi < b; ++bi)
            for (long t = 0; t < l; ++t) {
              const double* dyrow = dy + (bi * l + t) * dout;
              for (long j = 0; j < k; ++j) {
                long ti = t - (k - 1) + j;
                if (ti < 0) continue;
                double* gxrow = gx.data() + (bi * l + ti) * d;
                const double* krow = kd2 + j * d * dout;
                for (long di = 0; di < d; ++di) {
                  double acc = 0;
                  const double* kslice = krow + di * dout;
                  for (long o = 0; o < dout; ++o) acc += dyrow[o] * kslice[o];
                  gxrow[di] += acc;
                }
              }
            }
        }
        if (pk->requires_grad) {
          Tensor& gk = pk->ensure_grad();
          const double* xd2 = px->data.data();
          for (long bi = 0; bi < b; ++bi)
            for (long t = 0; t < l; ++t) {
              const double* dyrow = dy + (bi * l + t) * dout;
              for (long j = 0; j < k; ++j) {
                long ti = t - (k - 1) + j;
                if (ti < 0) continue;
                const double* xrow = xd2 + (bi * l + ti) * d;
                double* grow = gk.data() + j * d * dout;
                for (long di = 0; di < d; ++di) {
                  const double xv = xrow[di];
                  if (xv == 0.0) continue;
                  double* gslice = grow + di * dout;
                  for (long o = 0; o < dout; ++o) gslice[o] += xv * dyrow[o];
                }
              }
            }
        }
      });
}

ValuePtr rfft(const ValuePtr& x) {
  require_real(x, "rfft");
  check_shape(x->data.rank() == 3, "rfft: input must be [B x L x D], got " +
                                       x->data.shape_str());
  const long b = x->data.dim(0), l = x->data.dim(1), d = x->data.dim(2);
  const long f = static_cast<long>(fft::rfft_bins(static_cast<size_t>(l)));
  Tensor out({b, f, d}, /*complex=*/true);
  std::vector<double> col(static_cast<size_t>(l));
  std::vector<std::complex<double>> spec(static_cast<size_t>(f));
  std::complex<double>* zd = as_complex(out);
  for (long bi = 0; bi < b; ++bi)
    for (long di = 0; di < d; ++di) {
      for (long t = 0; t < l; ++t) col[static_cast<size_t>(t)] = x->data.raw((bi * l + t) * d + di);
      fft::rfft(col.data(), static_cast<size_t>(l), spec.data());
      for (long fi = 0; fi < f; ++fi) zd[(bi * f + fi) * d + di] = spec[static_cast<size_t>(fi)];
    }
  Value* px = x.get();
  return make_node("rfft", std::move(out), {x}, [px, b, l, d, f](Value& self) {
    if (!px->requires_grad) return;
    Tensor& g = px->ensure_grad();
    std::vector<std::complex<double>> dz(static_cast<size_t>(f));
    std::vector<double> dx(static_cast<size_t>(l));
    const std::complex<double>* gz = as_complex(self.grad);
    for (long bi = 0; bi < b; ++bi)
      for (long di = 0; di < d; ++di) {
        for (long fi = 0; fi < f; ++fi) dz[static_cast<size_t>(fi)] = gz[(bi * f + fi) * d + di];
        fft::rfft_adjoint(dz.data(), static_cast<size_t>(l), dx.data());
        for (long t = 0; t < l; ++t) g.raw((bi * l + t) * d + di) += dx[static_cast<size_t>(t)];
      }
  });
}

ValuePtr irfft(const ValuePtr& z, long time_len) {
  check_shape(z->data.is_complex() && z->data.rank() == 3,
              "irfft: input must be complex [B x F x D], got " + z->data.shape_str());
  const long b = z->data.dim(0), f = z->data.dim(1), d = z->data.dim(2);
  check_shape(f == static_cast<long>(fft::rfft_bins(static_cast<size_t>(time_len))),
              "irfft: bin count " + std::to_string(f) + " does not match length " +
                  std::to_string(time_len));
  Tensor out({b, time_len, d});
  std::vector<std::complex<double>> spec(static_cast<size_t>(f));
  std::vector<double> col(static_cast<size_t>(time_len));
  const std::complex<double>* zd = as_complex(z->data);
  for (long bi = 0; bi < b; ++bi)
    for (long di = 0; di < d; ++di) {
      for (long fi = 0; fi < f; ++fi) spec[static_cast<size_t>(fi)] = zd[(bi * f + fi) * d + di];
      fft::irfft(spec.data(), static_cast<size_t>(time_len), col.data());
      for (long t = 0; t < time_len; ++t) out.raw((bi * time_len + t) * d + di) = col[static_cast<size_t>(t)];
    }
  Value* pz = z.get();
  const long l = time_len;
  return make_node("irfft", std::move(out), {z}, [pz, b, l, d, f](Value& self) {
    if (!pz->requires_grad) return;
    Tensor& g = pz->ensure_grad();
    std::vector<double> dx(static_cast<size_t>(l));
    std::vector<std::complex<double>> dz(static_cast<size_t>(f));
    std::complex<double>* gz = as_complex(g);
    for (long bi = 0; bi < b; ++bi)
      for (long di = 0; di < d; ++di) {
        for (long t = 0; t < l; ++t) dx[static_cast<size_t>(t)] = self.grad.raw((bi * l + t) * d + di);
        fft::irfft_adjoint(dx.data(), static_cast<size_t>(l), dz.data());
        for (long fi = 0; fi < f; ++fi) gz[(bi * f + fi) * d + di] += dz[static_cast<size_t>(fi)];
      }
  });
}

ValuePtr complex_linear(const ValuePtr& z, const ValuePtr& w) {
  check_shape(z->data.is_complex() && z->data.rank() == 3,
              "complex_linear: input must be complex [B x F x D_in], got " +
                  z->data.shape_str());
  check_shape(w->data.is_complex() && w->data.rank() == 3 &&
                  w->data.dim(0) == z->data.dim(1) && w->data.dim(1) == z->data.dim(2),
              "complex_linear: weight " + w->data.shape_str() + " incompatible with " +
                  z->data.shape_str());
  const long b = z->data.dim(0), f = z->data.dim(1), di = z->data.dim(2);
  const long dout = w->data.dim(2);
  Tensor out({b, f, dout}, /*complex=*/true);
  using MapC = Eigen::Map<CMat, 0, Stride>;
  using MapCC = Eigen::Map<const CMat, 0, Stride>;
  const std::complex<double>* zd = as_complex(z->data);
  const std::complex<double>* wd = as_complex(w->data);
  std::complex<double>* yd = as_complex(out);
  for (long fi = 0; fi < f; ++fi) {
    MapCC zf(zd + fi * di, b, di, Stride(f * di));
    Eigen::Map<const CMat> wf(wd + fi * di * dout, di, dout);
    MapC yf(yd + fi * dout, b, dout, Stride(f * dout));
    yf.noalias() = zf * wf;
  }
  Value* pz = z.get();
  Value* pw = w.get();
  return make_node(
      "complex_linear", std::move(out), {z, w}, [pz, pw, b, f, di, dout](Value& self) {
        const std::complex<double>* zd2 = as_complex(pz->data);
        const std::complex<double>* wd2 = as_complex(pw->data);
        const std::complex<double>* dy = as_complex(self.grad);
        for (long fi = 0; fi < f; ++fi) {
          Eigen::Map<const CMat, 0, Stride> dyf(dy + fi * dout, b, dout, Stride(f * dout));
          if (pz->requires_grad) {
            Eigen::Map<CMat, 0, Stride> gz(as_complex(pz->ensure_grad()) + fi * di, b, di,
                                           Stride(f * di));
            Eigen::Map<const CMat> wf(wd2 + fi * di * dout, di, dout);
            gz.noalias() += dyf * wf.adjoint();
          }
          if (pw->requires_grad) {
            Eigen::Map<CMat> gw(as_complex(pw->ensure_grad()) + fi * di * dout, di, dout);
            Eigen::Map<const CMat, 0, Stride> zf(zd2 + fi * di, b, di, Stride(f * di));
            gw.noalias() += zf.adjoint() * dyf;
          }
        }
      });
}

namespace {

// Twiddle c_f for evaluating the inverse real transform at one time index:
// x[n] = sum_f Re(c_f * Z_f), c_f = (w_f / L) e^{i 2 pi f n / L}.
std::vector<std::complex<double>> irfft_sample_twiddles(long f, long l, long index) {
  std::vector<std::complex<double>> c(static_cast<size_t>(f));
  const bool even = (l % 2 == 0);
  for (long fi = 0; fi < f; ++fi) {
    double wf = (fi == 0 || (even && fi == f - 1)) ? 1.0 : 2.0;
    double theta = 2.0 * M_PI * static_cast<double>(fi) * static_cast<double>(index) /
                   static_cast<double>(l);
    c[static_cast<size_t>(fi)] =
        std::polar(wf / static_cast<double>(l), theta);
  }
  return c;
}

void split_complex(const std::complex<double>* src, long n, double* re, double* im) {
  for (long i = 0; i < n; ++i) {
    re[i] = src[i].real();
    im[i] = src[i].imag();
  }
}

}  // namespace

ValuePtr complex_linear_irfft_at(const ValuePtr& z, const ValuePtr& w, long time_len,
                                 long index) {
  check_shape(z->data.is_complex() && z->data.rank() == 3 && w->data.is_complex() &&
                  w->data.rank() == 3 && w->data.dim(0) == z->data.dim(1) &&
                  w->data.dim(1) == z->data.dim(2),
              "complex_linear_irfft_at: incompatible " + z->data.shape_str() + " and " +
                  w->data.shape_str());
  const long b = z->data.dim(0), f = z->data.dim(1), di = z->data.dim(2);
  const long dout = w->data.dim(2);
  check_shape(f == static_cast<long>(fft::rfft_bins(static_cast<size_t>(time_len))) &&
                  index >= 0 && index < time_len,
              "complex_linear_irfft_at: bad length/index for " + z->data.shape_str());
  const long fd = f * di;
  auto tw = irfft_sample_twiddles(f, time_len, index);

  // U = twiddle-scaled z flattened to [B x F*Din]; y = Re(U * W) via two
  // real GEMMs on the deinterleaved components.
  RMat ure(b, fd), uim(b, fd), wre(fd, dout), wim(fd, dout);
  const std::complex<double>* zd = as_complex(z->data);
  for (long bi = 0; bi < b; ++bi)
    for (long fi = 0; fi < f; ++fi) {
      const std::complex<double> c = tw[static_cast<size_t>(fi)];
      for (long i = 0; i < di; ++i) {
        std::complex<double> u = c * zd[(bi * f + fi) * di + i];
        ure(bi, fi * di + i) = u.real();
        uim(bi, fi * di + i) = u.imag();
      }
    }
  split_complex(as_complex(w->data), fd * dout, wre.data(), wim.data());

  Tensor out({b, dout});
  MapR y(out.data(), b, dout);
  y.noalias() = ure * wre;
  y.noalias() -= uim * wim;

  Value* pz = z.get();
  Value* pw = w.get();
  return make_node(
      "complex_linear_irfft_at", std::move(out), {z, w},
      [pz, pw, b, f, di, dout, fd, tw](Value& self) {
        // Rebuild the deinterleaved operands (cheaper than stashing them).
        RMat ure(b, fd), uim(b, fd), wre(fd, dout), wim(fd, dout);
        const std::complex<double>* zd2 = as_complex(pz->data);
        for (long bi = 0; bi < b; ++bi)
          for (long fi = 0; fi < f; ++fi) {
            const std::complex<double> c = tw[static_cast<size_t>(fi)];
            for (long i = 0; i < di; ++i) {
              std::complex<double> u = c * zd2[(bi * f + fi) * di + i];
              ure(bi, fi * di + i) = u.real();
              uim(bi, fi * di + i) = u.imag();
            }
          }
        split_complex(as_complex(pw->data), fd * dout, wre.data(), wim.data());
        MapCR dy(self.grad.data(), b, dout);
        if (pz->requires_grad) {
          RMat dure = dy * wre.transpose();
          RMat duim = -(dy * wim.transpose());
          std::complex<double>* gz = as_complex(pz->ensure_grad());
          for (long bi = 0; bi < b; ++bi)
            for (long fi = 0; fi < f; ++fi) {
              const std::complex<double> cc = std::conj(tw[static_cast<size_t>(fi)]);
              for (long i = 0; i < di; ++i) {
                std::complex<double> du(dure(bi, fi * di + i), duim(bi, fi * di + i));
                gz[(bi * f + fi) * di + i] += cc * du;
              }
            }
        }
        if (pw->requires_grad) {
          RMat dwre = ure.transpose() * dy;
          RMat dwim = -(uim.transpose() * dy);
          std::complex<double>* gw = as_complex(pw->ensure_grad());
          for (long i = 0; i < fd * dout; ++i)
            gw[i] += std::complex<double>(dwre.data()[i], dwim.data()[i]);
        }
      });
}

void backward(const ValuePtr& root) {
  check_shape(root->data.numel() == 1 && !root->data.is_complex(),
              "backward: root must be a real scalar, got " + root->data.shape_str());
  if (!root->requires_grad) {
    root->ensure_grad();
    root->grad.raw(0) = 1.0;
    return;
  }

  // Post-order DFS; reversed, it yields every node before its inputs.
  std::vector<Value*> order;
  std::unordered_set<Value*> seen;
  std::vector<std::pair<Value*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Value* p = node->parents[idx].get();
      ++idx;
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Value* n : order) n->ensure_grad();
  root->grad.raw(0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);

  // First-order engine: release the graph, keep leaf grads.
  for (Value* n : order) {
    n->backward_fn = nullptr;
    n->parents.clear();
  }
}

}  // namespace tscast::ad
