#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "tscast/tensor.hpp"

namespace tscast::ad {

// Reverse-mode gradient engine over the operation set the encoder and the
// contrastive loss need. Nodes own their value and a same-shape gradient
// slot; backward() visits the graph once in reverse topological order and
// then frees the graph (first-order only, no retained tapes).
//
// Complex tensors are stored as interleaved (re, im) doubles and their
// gradients live in the same layout, so the engine stays real-valued
// internally; complex ops state their adjoints in those components.
struct Value;
using ValuePtr = std::shared_ptr<Value>;

struct Value {
  Tensor data;
  Tensor grad;  // allocated on first use during backward
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<ValuePtr> parents;
  std::function<void(Value&)> backward_fn;

  Tensor& ensure_grad() {
    if (grad.empty() && data.value_count() > 0)
      grad = Tensor(data.dims(), data.is_complex());
    return grad;
  }
};

ValuePtr leaf(Tensor t, bool requires_grad = true);
ValuePtr constant(Tensor t);

// elementwise / scalar
ValuePtr add(const ValuePtr& a, const ValuePtr& b);
ValuePtr sub(const ValuePtr& a, const ValuePtr& b);
ValuePtr mul(const ValuePtr& a, const ValuePtr& b);  // real only
ValuePtr scale(const ValuePtr& a, double c);
ValuePtr exp_elem(const ValuePtr& x);
ValuePtr log_elem(const ValuePtr& x);

// shape plumbing (real tensors)
ValuePtr reshape(const ValuePtr& x, std::vector<long> dims);
ValuePtr narrow(const ValuePtr& x, int axis, long start, long len);
ValuePtr select_index(const ValuePtr& x, int axis, long index);
ValuePtr concat(const std::vector<ValuePtr>& xs, int axis);

// reductions
ValuePtr sum_all(const ValuePtr& x);
ValuePtr sum_axis(const ValuePtr& x, int axis);
ValuePtr mean_over(const ValuePtr& x, int axis);
ValuePtr l2_normalize(const ValuePtr& x, int axis);  // eps=1e-12 zero guard
ValuePtr log_sum_exp_rows(const ValuePtr& x);        // [N x M] -> [N], stable
ValuePtr select_col(const ValuePtr& x, long col);    // [N x M] -> [N]

// linear algebra
ValuePtr matmul(const ValuePtr& a, const ValuePtr& b);              // [MxK]*[KxN]
ValuePtr linear(const ValuePtr& x, const ValuePtr& w, const ValuePtr& bias);
// x: [B x L x D_in], w: [D_in x D_out], bias: [D_out] -> [B x L x D_out]
ValuePtr conv1d_causal(const ValuePtr& x, const ValuePtr& kernel);
// x: [B x L x D], kernel: [k x D x D_out] -> [B x L x D_out], zero left pad

// frequency domain
ValuePtr rfft(const ValuePtr& x);                    // [BxLxD] -> cplx [BxFxD]
ValuePtr irfft(const ValuePtr& z, long time_len);    // cplx [BxFxD] -> [BxLxD]
ValuePtr complex_linear(const ValuePtr& z, const ValuePtr& w);
// z: cplx [B x F x D_in], w: cplx [F x D_in x D_out] -> cplx [B x F x D_out]
ValuePtr complex_linear_irfft_at(const ValuePtr& z, const ValuePtr& w,
                                 long time_len, long index);
// Fused complex_linear -> irfft -> time sample `index`; algebraically equal
// to select_index(irfft(complex_linear(z, w), L), 1, index) and O(L) cheaper.

void backward(const ValuePtr& root);

}  // namespace tscast::ad
