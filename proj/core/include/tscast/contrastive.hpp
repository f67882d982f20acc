#pragma once

#include <functional>
#include <vector>

#include "tscast/augment.hpp"
#include "tscast/backbone.hpp"
#include "tscast/data.hpp"
#include "tscast/tensor.hpp"

namespace tscast {

struct MocoConfig {
  long n = 256;        // batch size
  long k = 512;        // queue length, 2N by default
  double m = 0.999;    // momentum coefficient
  double tau = 0.07;   // temperature
  double lr = 1e-3;
  double sgd_momentum = 0.9;
  long epochs = 100;
  enum class ContrastTimesteps { last, all } contrast_timesteps = ContrastTimesteps::last;

  void validate() const;
};

// Momentum-encoder training state: online/momentum parameter copies plus the
// FIFO ring of L2-normalized key representations used as negatives.
struct MocoState {
  BackboneParams online;
  BackboneParams momentum;
  Tensor queue;  // [K x d_rep]
  long queue_head = 0;
  long queue_filled = 0;
  double m = 0.999;
  double tau = 0.07;
};

// L = sum_i -log( exp(q_i . k_i / tau) / (exp(q_i . k_i / tau) +
//                 sum_j exp(q_i . queue_j / tau)) ).
// Gradients flow to q only; k_pos and the queue are detached. Rows of all
// three must be unit-norm (within 1e-3).
double info_nce(const Tensor& q, const Tensor& k_pos, const Tensor& queue, double tau);
ad::ValuePtr info_nce_node(const ad::ValuePtr& q, const Tensor& k_pos,
                           const Tensor& queue, double tau);

// momentum <- m * momentum + (1 - m) * online, elementwise.
void momentum_update(BackboneParams& momentum, const BackboneParams& online, double m);

// FIFO overwrite of the N oldest slots; head advances mod K.
void enqueue(MocoState& state, const Tensor& k_batch);

struct TraceRow {
  long step = 0;   // post-warmup step index
  long epoch = 0;
  double loss = 0; // batch-mean contrastive loss
  double lr = 0;
};

struct TrainSettings {
  long l_in = 336;
  bool channel_mix = false;
  AugmentConfig augment;
  BackboneConfig backbone;  // l_in / in_channels filled in by train()
  MocoConfig moco;
};

struct TrainResult {
  MocoState state;
  std::vector<TraceRow> trace;
  long steps = 0;
  BackboneConfig backbone;  // resolved config actually trained
};

TrainResult train(const SeriesDataset& ds, TrainSettings settings, uint64_t master_seed,
                  const std::function<void(const TraceRow&)>& on_step = nullptr);

}  // namespace tscast
