#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpts/errors.hpp"
#include "dpts/rng.hpp"

namespace dpts {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until touched by backward
  bool requires_grad = false;
  Tape* tape = nullptr;  // tape that recorded the producing op, if any
  int64_t node = -1;     // index of that op on the tape

  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
  }
};
}  // namespace detail

// Dense row-major double tensor with an optional gradient slot. Copying a
// Tensor copies the handle; clone() copies the storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);
  // Centered uniform init in [-bound, bound].
  static Tensor uniform(Shape shape, double bound, Rng& rng, bool requires_grad = false);
  static Tensor normal(Shape shape, double stddev, Rng& rng, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(impl_->values.size()); }

  std::span<double> values() { return impl_->values; }
  std::span<const double> values() const { return impl_->values; }
  double value() const;  // scalar accessor

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool b) { impl_->requires_grad = b; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<double> grad();  // allocates zeros on first touch
  std::span<const double> grad() const;
  void zero_grad();
  Tensor grad_tensor() const;  // grad as a fresh tensor (zeros if absent)

  // Value copy detached from any tape; the result is a leaf.
  Tensor detach(bool requires_grad = false) const;
  Tensor clone() const;

  bool same_shape(const Tensor& other) const { return impl_->shape == other.impl_->shape; }

  std::shared_ptr<detail::TensorImpl>& impl() { return impl_; }
  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Reverse-mode tape: ops append one closure per executed primitive, backward
// replays them newest-first. Gradients accumulate additively, so a tensor
// used twice receives the sum of both contributions.
class Tape {
 public:
  // Seeds d(loss)/d(loss) = 1 and propagates to every reachable tensor.
  void backward(const Tensor& loss);
  // Seeds an explicit upstream gradient at `output` and propagates from there.
  void backward_from(const Tensor& output, std::span<const double> seed);

  size_t size() const { return nodes_.size(); }

  // Zeros the gradient of every tensor produced on this tape. Leaf gradients
  // are the caller's to reset; after both, backward replays identically.
  void clear_grads();

  // Used by op implementations: register the backward closure for `out`.
  void record(Tensor& out, std::function<void()> backprop);

 private:
  void run_from(int64_t node);
  std::vector<std::function<void()>> nodes_;
  std::vector<std::shared_ptr<detail::TensorImpl>> outputs_;
};

namespace ops {

// All primitives share the signature (tape, inputs...) -> output. A null tape
// runs forward-only; with a tape, a backward closure is recorded whenever an
// input requires grad.

Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape* tape, const Tensor& a, double c);
Tensor add_scalar(Tape* tape, const Tensor& a, double c);
Tensor square(Tape* tape, const Tensor& a);

// y = x * s[n] per sample (row-wise broadcast over the leading axis).
Tensor row_scale(Tape* tape, const Tensor& x, const Tensor& s);
// [D] -> [N x D], repeating v in every row.
Tensor tile_rows(Tape* tape, const Tensor& v, int n);

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape* tape, const Tensor& a);  // rank-2 only

Tensor reshape(Tape* tape, const Tensor& a, Shape shape);
Tensor concat_cols(Tape* tape, const Tensor& a, const Tensor& b);      // [NxA],[NxB] -> [Nx(A+B)]
Tensor slice_cols(Tape* tape, const Tensor& a, int begin, int count);
Tensor concat_channels(Tape* tape, const Tensor& a, const Tensor& b);  // [NxC1xL],[NxC2xL]
Tensor slice_channels(Tape* tape, const Tensor& a, int begin, int count);
// Centered crop along the time axis of a [NxCxL] tensor.
Tensor crop_time(Tape* tape, const Tensor& a, int out_length);

// Bias broadcasts: b over columns of [NxD], or over channels of [NxCxL].
Tensor add_bias_cols(Tape* tape, const Tensor& x, const Tensor& b);
Tensor add_bias_channels(Tape* tape, const Tensor& x, const Tensor& b);

// Cross-correlation over the time axis with zero padding.
// x [N x Cin x L], kernel [Cout x Cin x K] -> [N x Cout x Lout],
// Lout = (L + 2*padding - K)/stride + 1.
Tensor conv1d(Tape* tape, const Tensor& x, const Tensor& kernel, const Tensor& bias,
              int stride, int padding);

// Adjoint of conv1d. kernel [Cin x Cout x K]. Default output length is
// (L-1)*stride - 2*padding + K; out_length may extend it by up to stride-1
// trailing positions (those receive no contributions) so that a conv1d whose
// length division truncated can be inverted exactly.
Tensor conv_transpose1d(Tape* tape, const Tensor& x, const Tensor& kernel, const Tensor& bias,
                        int stride, int padding, int out_length = -1);

// Stride-1 max pool with same-length output; window must be odd.
Tensor maxpool1d_same(Tape* tape, const Tensor& x, int window);

Tensor relu(Tape* tape, const Tensor& x);
Tensor leaky_relu(Tape* tape, const Tensor& x, double slope = 0.2);
Tensor sigmoid(Tape* tape, const Tensor& x);
Tensor tanh_act(Tape* tape, const Tensor& x);
Tensor softmax_rows(Tape* tape, const Tensor& x);

// Constant a.e.-derivative mask of leaky_relu at x; never requires grad.
// Building blocks for hand-assembled input-gradient chains.
Tensor leaky_relu_mask(const Tensor& x, double slope = 0.2);
Tensor sigmoid_derivative(const Tensor& sigmoid_out);

Tensor sum_all(Tape* tape, const Tensor& x);   // -> scalar
Tensor mean_all(Tape* tape, const Tensor& x);  // -> scalar
Tensor mean_over_time(Tape* tape, const Tensor& x);  // [NxCxL] -> [NxC]
Tensor rows_l2_norm(Tape* tape, const Tensor& x);    // [NxD] -> [N]

// Mean negative log softmax probability of the true class, max-stabilized.
Tensor cross_entropy(Tape* tape, const Tensor& logits, const std::vector<int>& labels);

// critic_loss = mean(fake) - mean(real); generator_loss = -mean(fake).
std::pair<Tensor, Tensor> wasserstein_losses(Tape* tape, const Tensor& critic_real,
                                             const Tensor& critic_fake);

// Builds d(score)/dx at x as a taped expression so that differentiating the
// result reaches the score function's parameters.
using InputGradBuilder = std::function<Tensor(Tape*, const Tensor& x)>;

// One-sided penalty lambda * mean((||grad at interpolate|| - 1)^2) with
// per-sample uniform interpolation between real and fake.
Tensor gradient_penalty(Tape* tape, const InputGradBuilder& critic_input_grad,
                        const Tensor& real, const Tensor& fake, double lambda, Rng& rng);

Tensor one_hot(const std::vector<int>& labels, int num_classes);
// [N x K x L] with row n carrying 1.0 on channel labels[n].
Tensor one_hot_channels(const std::vector<int>& labels, int num_classes, int length);

}  // namespace ops

enum class OptKind { adam, rmsprop };

// Adam (bias-corrected) / RMSProp over a fixed parameter list. Buffers are
// allocated at construction and must stay shape-aligned with the parameters.
class Optimizer {
 public:
  Optimizer(OptKind kind, double learning_rate, std::vector<Tensor> params,
            double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8,
            double rms_decay = 0.9);

  void step();       // consumes param.grad; missing grads count as zero
  void zero_grad();  // clears grads on all parameters
  void set_learning_rate(double lr) { learning_rate_ = lr; }
  double learning_rate() const { return learning_rate_; }
  int64_t step_count() const { return step_count_; }

 private:
  OptKind kind_;
  double learning_rate_;
  double beta1_, beta2_, epsilon_, rms_decay_;
  int64_t step_count_ = 0;
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;  // first moment / rms accumulator
  std::vector<std::vector<double>> v_;  // second moment (adam only)
};

// Parameter snapshot helpers for best-checkpoint bookkeeping.
std::vector<std::vector<double>> snapshot_params(const std::vector<Tensor>& params);
void restore_params(std::vector<Tensor>& params, const std::vector<std::vector<double>>& snap);

}  // namespace dpts
