#include "tscast/contrastive.hpp"

#include <algorithm>
#include <cmath>

#include "tscast/errors.hpp"

namespace tscast {

void MocoConfig::validate() const {
  if (n < 1) throw ConfigError("moco: batch size must be >= 1");
  if (k < 0) throw ConfigError("moco: queue length must be >= 0");
  if (n > k && k > 0)
    throw ConfigError("moco: batch size " + std::to_string(n) +
                      " exceeds queue length " + std::to_string(k));
  if (m < 0.0 || m > 1.0)
    throw ConfigError("moco: momentum coefficient must be in [0, 1], got " +
                      std::to_string(m));
  if (tau <= 0.0) throw ConfigError("moco: temperature must be positive");
  if (lr <= 0.0) throw ConfigError("moco: learning rate must be positive");
  if (epochs < 1) throw ConfigError("moco: epochs must be >= 1");
}

namespace {

void check_rows_normalized(const Tensor& t, const char* what) {
  if (t.numel() == 0) return;
  const long rows = t.dim(0), d = t.dim(1);
  for (long i = 0; i < rows; ++i) {
    double ss = 0;
    for (long j = 0; j < d; ++j) {
      double v = t.raw(i * d + j);
      ss += v * v;
    }
    if (std::abs(std::sqrt(ss) - 1.0) > 1e-3)
      throw NormalizationError(std::string(what) + " row " + std::to_string(i) +
                               " has L2 norm " + std::to_string(std::sqrt(ss)));
  }
}

Tensor transpose2d(const Tensor& t) {
  const long r = t.dim(0), c = t.dim(1);
  Tensor out({c, r});
  for (long i = 0; i < r; ++i)
    for (long j = 0; j < c; ++j) out.raw(j * r + i) = t.raw(i * c + j);
  return out;
}

}  // namespace

ad::ValuePtr info_nce_node(const ad::ValuePtr& q, const Tensor& k_pos,
                           const Tensor& queue, double tau) {
  if (tau <= 0.0) throw ConfigError("info_nce: temperature must be positive");
  check_shape(q->data.rank() == 2 && k_pos.rank() == 2 &&
                  q->data.dim(0) == k_pos.dim(0) && q->data.dim(1) == k_pos.dim(1),
              "info_nce: q " + q->data.shape_str() + " vs k_pos " + k_pos.shape_str());
  const long n = q->data.dim(0), d = q->data.dim(1);
  const long kn = (!queue.empty() && queue.rank() == 2) ? queue.dim(0) : 0;
  if (kn > 0)
    check_shape(queue.dim(1) == d, "info_nce: queue " + queue.shape_str() +
                                       " incompatible with q " + q->data.shape_str());
  check_rows_normalized(q->data, "q");
  check_rows_normalized(k_pos, "k_pos");
  check_rows_normalized(queue, "queue");

  // logits = [q.k_pos | q.queue^T] / tau; loss = sum_i (lse_i - logits_i0)
  ad::ValuePtr pos = ad::reshape(ad::sum_axis(ad::mul(q, ad::constant(k_pos)), 1), {n, 1});
  ad::ValuePtr logits = pos;
  if (kn > 0) {
    ad::ValuePtr neg = ad::matmul(q, ad::constant(transpose2d(queue)));
    logits = ad::concat({pos, neg}, 1);
  }
  ad::ValuePtr scaled = ad::scale(logits, 1.0 / tau);
  ad::ValuePtr lse = ad::log_sum_exp_rows(scaled);
  return ad::sum_all(ad::sub(lse, ad::select_col(scaled, 0)));
}

double info_nce(const Tensor& q, const Tensor& k_pos, const Tensor& queue, double tau) {
  return info_nce_node(ad::constant(q), k_pos, queue, tau)->data.raw(0);
}

void momentum_update(BackboneParams& momentum, const BackboneParams& online, double m) {
  if (m < 0.0 || m > 1.0)
    throw ConfigError("momentum_update: coefficient must be in [0, 1], got " +
                      std::to_string(m));
  if (!momentum.same_shapes(online))
    throw ShapeError("momentum_update: parameter shapes differ");
  std::vector<const Tensor*> src;
  online.for_each([&](const std::string&, const Tensor& t) { src.push_back(&t); });
  size_t idx = 0;
  momentum.for_each([&](const std::string&, Tensor& t) {
    const Tensor& o = *src[idx++];
    for (long i = 0; i < t.value_count(); ++i)
      t.raw(i) = m * t.raw(i) + (1.0 - m) * o.raw(i);
  });
}

void enqueue(MocoState& state, const Tensor& k_batch) {
  const long kq = state.queue.dim(0);
  const long n = k_batch.dim(0), d = k_batch.dim(1);
  if (n == 0 || kq == 0) {
    if (n > kq)
      throw ConfigError("enqueue: batch of " + std::to_string(n) +
                        " exceeds queue length " + std::to_string(kq));
    return;
  }
  if (n > kq)
    throw ConfigError("enqueue: batch of " + std::to_string(n) +
                      " exceeds queue length " + std::to_string(kq));
  check_shape(state.queue.dim(1) == d, "enqueue: key width " + std::to_string(d) +
                                           " vs queue " + state.queue.shape_str());
  check_rows_normalized(k_batch, "k_batch");
  for (long i = 0; i < n; ++i) {
    long slot = (state.queue_head + i) % kq;
    for (long j = 0; j < d; ++j) state.queue.raw(slot * d + j) = k_batch.raw(i * d + j);
  }
  state.queue_head = (state.queue_head + n) % kq;
  state.queue_filled = std::min(kq, state.queue_filled + n);
}

namespace {

struct SgdState {
  std::vector<Tensor> velocity;
};

void sgd_step(BackboneParams& params, const ParamNodes& nodes, SgdState& sgd,
              double lr, double beta) {
  std::vector<const Tensor*> grads;
  grads.push_back(&nodes.proj_w->grad);
  grads.push_back(&nodes.proj_b->grad);
  for (const auto& k : nodes.trend_kernels) grads.push_back(&k->grad);
  if (nodes.periodic_w) grads.push_back(&nodes.periodic_w->grad);

  size_t idx = 0;
  params.for_each([&](const std::string&, Tensor& t) {
    const Tensor& g = *grads[idx];
    if (sgd.velocity.size() <= idx) sgd.velocity.emplace_back(t.dims(), t.is_complex());
    Tensor& v = sgd.velocity[idx];
    ++idx;
    if (g.empty()) return;  // parameter did not participate in this graph
    for (long i = 0; i < t.value_count(); ++i) {
      v.raw(i) = beta * v.raw(i) + g.raw(i);
      t.raw(i) -= lr * v.raw(i);
    }
  });
}

// Batch of augmented views stacked into [N x L x C] component tensors.
struct ViewBatch {
  Tensor q_periodic, q_trend, k_periodic, k_trend;
};

ViewBatch build_view_batch(const std::vector<Window>& windows, const AugmentConfig& aug,
                           uint64_t batch_seed) {
  const long n = static_cast<long>(windows.size());
  const long l = windows[0].l_in(), c = windows[0].width();
  ViewBatch vb{Tensor({n, l, c}), Tensor({n, l, c}), Tensor({n, l, c}), Tensor({n, l, c})};
  const long stride = l * c;
  for (long i = 0; i < n; ++i) {
    Rng wrng(derive_seed(batch_seed, "window", static_cast<uint64_t>(i)));
    ViewPair vp = make_view_pair(windows[static_cast<size_t>(i)], aug, wrng);
    std::copy(vp.q.periodic.data(), vp.q.periodic.data() + stride, vb.q_periodic.data() + i * stride);
    std::copy(vp.q.trend.data(), vp.q.trend.data() + stride, vb.q_trend.data() + i * stride);
    std::copy(vp.k.periodic.data(), vp.k.periodic.data() + stride, vb.k_periodic.data() + i * stride);
    std::copy(vp.k.trend.data(), vp.k.trend.data() + stride, vb.k_trend.data() + i * stride);
  }
  return vb;
}

Tensor l2_normalize_rows(const Tensor& t) {
  const long rows = t.dim(0), d = t.dim(1);
  Tensor out = t;
  for (long i = 0; i < rows; ++i) {
    double ss = 0;
    for (long j = 0; j < d; ++j) ss += t.raw(i * d + j) * t.raw(i * d + j);
    double r = std::max(std::sqrt(ss), 1e-12);
    for (long j = 0; j < d; ++j) out.raw(i * d + j) = t.raw(i * d + j) / r;
  }
  return out;
}

}  // namespace

TrainResult train(const SeriesDataset& ds, TrainSettings settings, uint64_t master_seed,
                  const std::function<void(const TraceRow&)>& on_step) {
  MocoConfig& mc = settings.moco;
  mc.validate();
  settings.augment.validate(settings.l_in);

  BackboneConfig cfg = settings.backbone;
  cfg.l_in = settings.l_in;
  cfg.in_channels = settings.channel_mix ? ds.channels() : 1;
  cfg.validate();

  const TimeReduce reduce = (mc.contrast_timesteps == MocoConfig::ContrastTimesteps::all)
                                ? TimeReduce::mean
                                : TimeReduce::last;

  TrainResult result;
  result.backbone = cfg;
  Rng init_rng(derive_seed(master_seed, "init"));
  result.state.online = BackboneParams::init(cfg, init_rng);
  result.state.momentum = result.state.online;
  result.state.queue = Tensor({mc.k, cfg.d_rep});
  result.state.m = mc.m;
  result.state.tau = mc.tau;
  MocoState& st = result.state;

  const SplitRange& tr = ds.range("train");
  const long total_windows =
      (tr.length() - settings.l_in + 1) * (settings.channel_mix ? 1 : ds.channels());
  if (total_windows < 1)
    throw WindowTooLongError("train range too short for window length " +
                             std::to_string(settings.l_in));
  const long steps_per_epoch =
      (total_windows + mc.n - 1) / mc.n;

  SgdState sgd;
  auto encode_batch = [&](const Tensor& periodic, const Tensor& trend,
                          const BackboneParams& p, bool grad,
                          ParamNodes* nodes_out) -> ad::ValuePtr {
    ParamNodes nodes = ParamNodes::from(p, grad);
    ad::ValuePtr rep = encode_node(ad::constant(periodic), ad::constant(trend), nodes, cfg, reduce);
    if (nodes_out) *nodes_out = std::move(nodes);
    return rep;
  };

  // Queue warm-up: enough momentum-encoder batches to fill all K slots; their
  // losses are not part of the trace and no SGD steps happen.
  const long warmup_batches = (mc.k > 0) ? (mc.k + mc.n - 1) / mc.n : 0;
  for (long wb = 0; wb < warmup_batches; ++wb) {
    uint64_t seed = derive_seed(master_seed, "warmup", static_cast<uint64_t>(wb));
    Rng srng(derive_seed(seed, "sample"));
    auto windows = sample_windows(ds, "train", mc.n, settings.l_in, srng, settings.channel_mix);
    ViewBatch vb = build_view_batch(windows, settings.augment, seed);
    ad::ValuePtr k_rep = encode_batch(vb.k_periodic, vb.k_trend, st.momentum, false, nullptr);
    enqueue(st, l2_normalize_rows(k_rep->data));
  }

  long global_step = 0;
  for (long epoch = 0; epoch < mc.epochs; ++epoch) {
    for (long s = 0; s < steps_per_epoch; ++s, ++global_step) {
      uint64_t seed = derive_seed(master_seed, "batch", static_cast<uint64_t>(epoch),
                                  static_cast<uint64_t>(s));
      Rng srng(derive_seed(seed, "sample"));
      auto windows = sample_windows(ds, "train", mc.n, settings.l_in, srng, settings.channel_mix);
      ViewBatch vb = build_view_batch(windows, settings.augment, seed);

      ParamNodes online_nodes;
      ad::ValuePtr q_rep = encode_batch(vb.q_periodic, vb.q_trend, st.online, true, &online_nodes);
      ad::ValuePtr q = ad::l2_normalize(q_rep, 1);
      ad::ValuePtr k_rep = encode_batch(vb.k_periodic, vb.k_trend, st.momentum, false, nullptr);
      Tensor k = l2_normalize_rows(k_rep->data);

      Tensor negatives({st.queue_filled, cfg.d_rep});
      std::copy(st.queue.data(), st.queue.data() + st.queue_filled * cfg.d_rep,
                negatives.data());
      ad::ValuePtr loss_sum = info_nce_node(q, k, negatives, mc.tau);
      // optimize the batch mean so the step size does not scale with N
      ad::ValuePtr loss = ad::scale(loss_sum, 1.0 / static_cast<double>(mc.n));

      const double loss_value = loss->data.raw(0);
      if (!std::isfinite(loss_value))
        throw DivergenceError(global_step, "non-finite contrastive loss at step " +
                                               std::to_string(global_step));

      ad::backward(loss);
      sgd_step(st.online, online_nodes, sgd, mc.lr, mc.sgd_momentum);
      momentum_update(st.momentum, st.online, mc.m);
      if (mc.k > 0) enqueue(st, k);

      TraceRow row{global_step, epoch, loss_value, mc.lr};
      result.trace.push_back(row);
      if (on_step) on_step(row);
    }
  }
  result.steps = global_step;
  return result;
}

}  // namespace tscast
