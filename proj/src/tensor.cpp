#include "dpts/tensor.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <sstream>

namespace dpts {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

namespace {

std::shared_ptr<detail::TensorImpl> make_impl(Shape shape, bool requires_grad) {
  for (int d : shape) {
    if (d <= 0) throw ArgumentError("tensor extent must be positive, got shape " + shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->values.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t;
  t.impl_ = make_impl(std::move(shape), requires_grad);
  return t;
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.impl_->values.begin(), t.impl_->values.end(), value);
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not fill shape " + shape_str(shape));
  }
  Tensor t = zeros(std::move(shape), requires_grad);
  t.impl_->values = std::move(values);
  return t;
}

Tensor Tensor::scalar(double value) { return from_values({1}, {value}); }

Tensor Tensor::uniform(Shape shape, double bound, Rng& rng, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.impl_->values) v = rng.uniform(-bound, bound);
  return t;
}

Tensor Tensor::normal(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.impl_->values) v = rng.normal(0.0, stddev);
  return t;
}

double Tensor::value() const {
  if (size() != 1) throw ArgumentError("value() requires a scalar, got shape " + shape_str(shape()));
  return impl_->values[0];
}

std::span<double> Tensor::grad() {
  impl_->ensure_grad();
  return impl_->grad;
}

std::span<const double> Tensor::grad() const {
  impl_->ensure_grad();
  return impl_->grad;
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::grad_tensor() const {
  Tensor g = zeros(impl_->shape);
  if (!impl_->grad.empty()) g.impl_->values = impl_->grad;
  return g;
}

Tensor Tensor::detach(bool requires_grad) const {
  Tensor t = zeros(impl_->shape, requires_grad);
  t.impl_->values = impl_->values;
  return t;
}

Tensor Tensor::clone() const {
  Tensor t = detach(impl_->requires_grad);
  t.impl_->grad = impl_->grad;
  return t;
}

void Tape::record(Tensor& out, std::function<void()> backprop) {
  nodes_.push_back(std::move(backprop));
  outputs_.push_back(out.impl());
  out.impl()->tape = this;
  out.impl()->node = static_cast<int64_t>(nodes_.size()) - 1;
}

void Tape::clear_grads() {
  for (auto& impl : outputs_) std::fill(impl->grad.begin(), impl->grad.end(), 0.0);
}

void Tape::run_from(int64_t node) {
  for (int64_t i = node; i >= 0; --i) nodes_[static_cast<size_t>(i)]();
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ArgumentError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  auto& impl = *loss.impl();
  impl.ensure_grad();
  impl.grad[0] += 1.0;
  if (impl.tape == nullptr) return;  // loss is a leaf; nothing to propagate
  if (impl.tape != this) throw ArgumentError("loss was not produced on this tape");
  run_from(impl.node);
}

void Tape::backward_from(const Tensor& output, std::span<const double> seed) {
  if (static_cast<int64_t>(seed.size()) != output.size()) {
    throw DimensionError("seed gradient size does not match output");
  }
  auto& impl = *output.impl();
  impl.ensure_grad();
  for (size_t i = 0; i < seed.size(); ++i) impl.grad[i] += seed[i];
  if (impl.tape == nullptr) return;
  if (impl.tape != this) throw ArgumentError("output was not produced on this tape");
  run_from(impl.node);
}

namespace ops {

namespace {

using ImplPtr = std::shared_ptr<detail::TensorImpl>;

bool out_grad_ready(const ImplPtr& out) { return !out->grad.empty(); }

// Shorthand: does this op need a tape node at all.
bool needs_node(Tape* tape, std::initializer_list<const Tensor*> inputs) {
  if (tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

void mark_output(Tape* tape, Tensor& out, std::initializer_list<const Tensor*> inputs,
                 std::function<void()> backprop) {
  if (!needs_node(tape, inputs)) return;
  out.set_requires_grad(true);
  tape->record(out, std::move(backprop));
}

}  // namespace

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros(a.shape());
  auto av = a.values(), bv = b.values();
  auto ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
  mark_output(tape, out, {&a, &b}, [ai, bi, oi]() {
    if (!out_grad_ready(oi)) return;
    if (ai->requires_grad) {
      ai->ensure_grad();
      for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (size_t i = 0; i < oi->grad.size(); ++i) bi->grad[i] += oi->grad[i];
    }
  });
  return out;
}

Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros(a.shape());
  auto av = a.values(), bv = b.values();
  auto ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
  mark_output(tape, out, {&a, &b}, [ai, bi, oi]() {
    if (!out_grad_ready(oi)) return;
    if (ai->requires_grad) {
      ai->ensure_grad();
      for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (size_t i = 0; i < oi->grad.size(); ++i) bi->grad[i] -= oi->grad[i];
    }
  });
  return out;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros(a.shape());
  auto av = a.values(), bv = b.values();
  auto ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
  mark_output(tape, out, {&a, &b}, [ai, bi, oi]() {
    if (!out_grad_ready(oi)) return;
    if (ai->requires_grad) {
      ai->ensure_grad();
      for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i] * bi->values[i];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (size_t i = 0; i < oi->grad.size(); ++i) bi->grad[i] += oi->grad[i] * ai->values[i];
    }
  });
  return out;
}

Tensor scale(Tape* tape, const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  auto av = a.values();
  auto ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
  ImplPtr ai = a.impl(), oi = out.impl();
  mark_output(tape, out, {&a}, [ai, oi, c]() {
    if (!out_grad_ready(oi) || !ai->requires_grad) return;
    ai->ensure_grad();
    for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i] * c;
  });
  return out;
}

Tensor add_scalar(Tape* tape, const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  auto av = a.values();
  auto ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + c;
  ImplPtr ai = a.impl(), oi = out.impl();
  mark_output(tape, out, {&a}, [ai, oi]() {
    if (!out_grad_ready(oi) || !ai->requires_grad) return;
    ai->ensure_grad();
    for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
  });
  return out;
}

Tensor square(Tape* tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  auto av = a.values();
  auto ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * av[i];
  ImplPtr ai = a.impl(), oi = out.impl();
  mark_output(tape, out, {&a}, [ai, oi]() {
    if (!out_grad_ready(oi) || !ai->requires_grad) return;
    ai->ensure_grad();
    for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += 2.0 * ai->values[i] * oi->grad[i];
  });
  return out;
}

Tensor row_scale(Tape* tape, const Tensor& x, const Tensor& s) {
  if (x.rank() < 1 || s.rank() != 1 || x.dim(0) != s.dim(0)) {
    throw DimensionError("row_scale: leading extents disagree, " + shape_str(x.shape()) +
                         " vs " + shape_str(s.shape()));
  }
  const int n = x.dim(0);
  const int64_t row = x.size() / n;
  Tensor out = Tensor::zeros(x.shape());
  auto xv = x.values(), sv = s.values();
  auto ov = out.values();
  for (int i = 0; i < n; ++i)
    for (int64_t j = 0; j < row; ++j) ov[i * row + j] = xv[i * row + j] * sv[i];
  ImplPtr xi = x.impl(), si = s.impl(), oi = out.impl();
  mark_output(tape, out, {&x, &s}, [xi, si, oi, n, row]() {
    if (!out_grad_ready(oi)) return;
    if (xi->requires_grad) {
      xi->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int64_t j = 0; j < row; ++j) xi->grad[i * row + j] += oi->grad[i * row + j] * si->values[i];
    }
    if (si->requires_grad) {
      si->ensure_grad();
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int64_t j = 0; j < row; ++j) acc += oi->grad[i * row + j] * xi->values[i * row + j];
        si->grad[i] += acc;
      }
    }
  });
  return out;
}

Tensor tile_rows(Tape* tape, const Tensor& v, int n) {
  if (v.rank() != 1) throw DimensionError("tile_rows expects a vector, got " + shape_str(v.shape()));
  if (n <= 0) throw ArgumentError("tile_rows: n must be positive");
  const int d = v.dim(0);
  Tensor out = Tensor::zeros({n, d});
  auto vv = v.values();
  auto ov = out.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) ov[i * d + j] = vv[j];
  ImplPtr vi = v.impl(), oi = out.impl();
  mark_output(tape, out, {&v}, [vi, oi, n, d]() {
    if (!out_grad_ready(oi) || !vi->requires_grad) return;
    vi->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) vi->grad[j] += oi->grad[i * d + j];
  });
  return out;
}

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  {
    auto av = a.values(), bv = b.values();
    auto ov = out.values();
    for (int i = 0; i < m; ++i) {
      for (int p = 0; p < k; ++p) {
        const double aip = av[i * k + p];
        if (aip == 0.0) continue;
        const double* brow = &bv[p * n];
        double* orow = &ov[i * n];
        for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
      }
    }
  }
  ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
  mark_output(tape, out, {&a, &b}, [ai, bi, oi, m, k, n]() {
    if (!out_grad_ready(oi)) return;
    const auto& g = oi->grad;
    if (ai->requires_grad) {
      ai->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = &g[i * n];
          const double* brow = &bi->values[p * n];
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ai->grad[i * k + p] += acc;
        }
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          const double aip = ai->values[i * k + p];
          if (aip == 0.0) continue;
          const double* grow = &g[i * n];
          double* brow = &bi->grad[p * n];
          for (int j = 0; j < n; ++j) brow[j] += aip * grow[j];
        }
    }
  });
  return out;
}

Tensor transpose(Tape* tape, const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose expects rank-2, got " + shape_str(a.shape()));
  const int m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros({n, m});
  auto av = a.values();
  auto ov = out.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) ov[j * m + i] = av[i * n + j];
  ImplPtr ai = a.impl(), oi = out.impl();
  mark_output(tape, out, {&a}, [ai, oi, m, n]() {
    if (!out_grad_ready(oi) || !ai->requires_grad) return;
    ai->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ai->grad[i * n + j] += oi->grad[j * m + i];
  });
  return out;
}

Tensor reshape(Tape* tape, const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  Tensor out = Tensor::zeros(std::move(shape));
  auto av = a.values();
  auto ov = out.values();
  std::copy(av.begin(), av.end(), ov.begin());
  ImplPtr ai = a.impl(), oi = out.impl();
  mark_output(tape, out, {&a}, [ai, oi]() {
    if (!out_grad_ready(oi) || !ai->requires_grad) return;
    ai->ensure_grad();
    for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
  });
  return out;
}

Tensor concat_cols(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw DimensionError("concat_cols: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const int n = a.dim(0), da = a.dim(1), db = b.dim(1);
  Tensor out = Tensor::zeros({n, da + db});
  auto av = a.values(), bv = b.values();
  auto ov = out.values();
  for (int i = 0; i < n; ++i) {
    std::copy(&av[i * da], &av[i * da] + da, &ov[i * (da + db)]);
    std::copy(&bv[i * db], &bv[i * db] + db, &ov[i * (da + db) + da]);
  }
  ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
  mark_output(tape, out, {&a, &b}, [ai, bi, oi, n, da, db]() {
    if (!out_grad_ready(oi)) return;
    if (ai->requires_grad) {
      ai->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < da; ++j) ai->grad[i * da + j] += oi->grad[i * (da + db) + j];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < db; ++j) bi->grad[i * db + j] += oi->grad[i * (da + db) + da + j];
    }
  });
  return out;
}

Tensor slice_cols(Tape* tape, const Tensor& a, int begin, int count) {
  if (a.rank() != 2) throw DimensionError("slice_cols expects rank-2, got " + shape_str(a.shape()));
  if (begin < 0 || count <= 0 || begin + count > a.dim(1)) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," +
                         std::to_string(begin + count) + ") outside " + shape_str(a.shape()));
  }
  const int n = a.dim(0), d = a.dim(1);
  Tensor out = Tensor::zeros({n, count});
  auto av = a.values();
  auto ov = out.values();
  for (int i = 0; i < n; ++i)
    std::copy(&av[i * d + begin], &av[i * d + begin] + count, &ov[i * count]);
  ImplPtr ai = a.impl(), oi = out.impl();
  mark_output(tape, out, {&a}, [ai, oi, n, d, begin, count]() {
    if (!out_grad_ready(oi) || !ai->requires_grad) return;
    ai->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < count; ++j) ai->grad[i * d + begin + j] += oi->grad[i * count + j];
  });
  return out;
}

Tensor concat_channels(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2)) {
    throw DimensionError("concat_channels: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), len = a.dim(2);
  Tensor out = Tensor::zeros({n, ca + cb, len});
  auto av = a.values(), bv = b.values();
  auto ov = out.values();
  for (int i = 0; i < n; ++i) {
    std::copy(&av[i * ca * len], &av[i * ca * len] + ca * len, &ov[i * (ca + cb) * len]);
    std::copy(&bv[i * cb * len], &bv[i * cb * len] + cb * len, &ov[i * (ca + cb) * len + ca * len]);
  }
  ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
  mark_output(tape, out, {&a, &b}, [ai, bi, oi, n, ca, cb, len]() {
    if (!out_grad_ready(oi)) return;
    const int co = ca + cb;
    if (ai->requires_grad) {
      ai->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < ca * len; ++j) ai->grad[i * ca * len + j] += oi->grad[i * co * len + j];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < cb * len; ++j)
          bi->grad[i * cb * len + j] += oi->grad[i * co * len + ca * len + j];
    }
  });
  return out;
}

Tensor slice_channels(Tape* tape, const Tensor& a, int begin, int count) {
  if (a.rank() != 3) throw DimensionError("slice_channels expects rank-3, got " + shape_str(a.shape()));
  if (begin < 0 || count <= 0 || begin + count > a.dim(1)) {
    throw DimensionError("slice_channels: channel range outside " + shape_str(a.shape()));
  }
  const int n = a.dim(0), c = a.dim(1), len = a.dim(2);
  Tensor out = Tensor::zeros({n, count, len});
  auto av = a.values();
  auto ov = out.values();
  for (int i = 0; i < n; ++i)
    std::copy(&av[(i * c + begin) * len], &av[(i * c + begin) * len] + count * len,
              &ov[i * count * len]);
  ImplPtr ai = a.impl(), oi = out.impl();
  mark_output(tape, out, {&a}, [ai, oi, n, c, len, begin, count]() {
    if (!out_grad_ready(oi) || !ai->requires_grad) return;
    ai->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < count * len; ++j)
        ai->grad[(i * c + begin) * len + j] += oi->grad[i * count * len + j];
  });
  return out;
}

Tensor crop_time(Tape* tape, const Tensor& a, int out_length) {
  if (a.rank() != 3) throw DimensionError("crop_time expects rank-3, got " + shape_str(a.shape()));
  const int n = a.dim(0), c = a.dim(1), len = a.dim(2);
  if (out_length <= 0 || out_length > len) {
    throw DimensionError("crop_time: cannot crop length " + std::to_string(len) + " to " +
                         std::to_string(out_length));
  }
  const int begin = (len - out_length) / 2;
  Tensor out = Tensor::zeros({n, c, out_length});
  auto av = a.values();
  auto ov = out.values();
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      std::copy(&av[(i * c + ch) * len + begin], &av[(i * c + ch) * len + begin] + out_length,
                &ov[(i * c + ch) * out_length]);
  ImplPtr ai = a.impl(), oi = out.impl();
  mark_output(tape, out, {&a}, [ai, oi, n, c, len, begin, out_length]() {
    if (!out_grad_ready(oi) || !ai->requires_grad) return;
    ai->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch)
        for (int t = 0; t < out_length; ++t)
          ai->grad[(i * c + ch) * len + begin + t] += oi->grad[(i * c + ch) * out_length + t];
  });
  return out;
}

Tensor add_bias_cols(Tape* tape, const Tensor& x, const Tensor& b) {
  if (x.rank() != 2 || b.rank() != 1 || x.dim(1) != b.dim(0)) {
    throw DimensionError("add_bias_cols: " + shape_str(x.shape()) + " vs " + shape_str(b.shape()));
  }
  const int n = x.dim(0), d = x.dim(1);
  Tensor out = Tensor::zeros({n, d});
  auto xv = x.values(), bv = b.values();
  auto ov = out.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) ov[i * d + j] = xv[i * d + j] + bv[j];
  ImplPtr xi = x.impl(), bi = b.impl(), oi = out.impl();
  mark_output(tape, out, {&x, &b}, [xi, bi, oi, n, d]() {
    if (!out_grad_ready(oi)) return;
    if (xi->requires_grad) {
      xi->ensure_grad();
      for (size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) bi->grad[j] += oi->grad[i * d + j];
    }
  });
  return out;
}

Tensor add_bias_channels(Tape* tape, const Tensor& x, const Tensor& b) {
  if (x.rank() != 3 || b.rank() != 1 || x.dim(1) != b.dim(0)) {
    throw DimensionError("add_bias_channels: " + shape_str(x.shape()) + " vs " + shape_str(b.shape()));
  }
  const int n = x.dim(0), c = x.dim(1), len = x.dim(2);
  Tensor out = Tensor::zeros({n, c, len});
  auto xv = x.values(), bv = b.values();
  auto ov = out.values();
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int t = 0; t < len; ++t)
        ov[(i * c + ch) * len + t] = xv[(i * c + ch) * len + t] + bv[ch];
  ImplPtr xi = x.impl(), bi = b.impl(), oi = out.impl();
  mark_output(tape, out, {&x, &b}, [xi, bi, oi, n, c, len]() {
    if (!out_grad_ready(oi)) return;
    if (xi->requires_grad) {
      xi->ensure_grad();
      for (size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
          double acc = 0.0;
          for (int t = 0; t < len; ++t) acc += oi->grad[(i * c + ch) * len + t];
          bi->grad[ch] += acc;
        }
    }
  });
  return out;
}

Tensor conv1d(Tape* tape, const Tensor& x, const Tensor& kernel, const Tensor& bias,
              int stride, int padding) {
  if (x.rank() != 3 || kernel.rank() != 3 || x.dim(1) != kernel.dim(1)) {
    throw DimensionError("conv1d: input " + shape_str(x.shape()) + " does not match kernel " +
                         shape_str(kernel.shape()));
  }
  if (stride <= 0 || padding < 0) throw ArgumentError("conv1d: stride must be >=1, padding >=0");
  const int n = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const int cout = kernel.dim(0), ksize = kernel.dim(2);
  if (len + 2 * padding < ksize) {
    throw DimensionError("conv1d: kernel size " + std::to_string(ksize) +
                         " exceeds padded length " + std::to_string(len + 2 * padding));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw DimensionError("conv1d: bias " + shape_str(bias.shape()) + " does not match Cout");
  }
  const int lout = (len + 2 * padding - ksize) / stride + 1;
  Tensor out = Tensor::zeros({n, cout, lout});
  {
    auto xv = x.values(), kv = kernel.values();
    auto ov = out.values();
    for (int i = 0; i < n; ++i)
      for (int co = 0; co < cout; ++co) {
        double* orow = &ov[(i * cout + co) * lout];
        if (bias.defined()) {
          const double bval = bias.values()[co];
          for (int t = 0; t < lout; ++t) orow[t] = bval;
        }
        for (int ci = 0; ci < cin; ++ci) {
          const double* xrow = &xv[(i * cin + ci) * len];
          const double* krow = &kv[(co * cin + ci) * ksize];
          for (int t = 0; t < lout; ++t) {
            const int base = t * stride - padding;
            double acc = 0.0;
            const int j0 = std::max(0, -base);
            const int j1 = std::min(ksize, len - base);
            for (int j = j0; j < j1; ++j) acc += krow[j] * xrow[base + j];
            orow[t] += acc;
          }
        }
      }
  }
  ImplPtr xi = x.impl(), ki = kernel.impl(), oi = out.impl();
  ImplPtr bi = bias.defined() ? bias.impl() : nullptr;
  mark_output(tape, out,
              bias.defined() ? std::initializer_list<const Tensor*>{&x, &kernel, &bias}
                             : std::initializer_list<const Tensor*>{&x, &kernel},
              [xi, ki, bi, oi, n, cin, cout, len, lout, ksize, stride, padding]() {
                if (!out_grad_ready(oi)) return;
                const auto& g = oi->grad;
                if (xi->requires_grad) {
                  xi->ensure_grad();
                  for (int i = 0; i < n; ++i)
                    for (int co = 0; co < cout; ++co)
                      for (int ci = 0; ci < cin; ++ci) {
                        const double* grow = &g[(i * cout + co) * lout];
                        const double* krow = &ki->values[(co * cin + ci) * ksize];
                        double* xg = &xi->grad[(i * cin + ci) * len];
                        for (int t = 0; t < lout; ++t) {
                          const int base = t * stride - padding;
                          const int j0 = std::max(0, -base);
                          const int j1 = std::min(ksize, len - base);
                          const double gv = grow[t];
                          for (int j = j0; j < j1; ++j) xg[base + j] += gv * krow[j];
                        }
                      }
                }
                if (ki->requires_grad) {
                  ki->ensure_grad();
                  for (int i = 0; i < n; ++i)
                    for (int co = 0; co < cout; ++co)
                      for (int ci = 0; ci < cin; ++ci) {
                        const double* grow = &g[(i * cout + co) * lout];
                        const double* xrow = &xi->values[(i * cin + ci) * len];
                        double* kg = &ki->grad[(co * cin + ci) * ksize];
                        for (int t = 0; t < lout; ++t) {
                          const int base = t * stride - padding;
                          const int j0 = std::max(0, -base);
                          const int j1 = std::min(ksize, len - base);
                          const double gv = grow[t];
                          for (int j = j0; j < j1; ++j) kg[j] += gv * xrow[base + j];
                        }
                      }
                }
                if (bi && bi->requires_grad) {
                  bi->ensure_grad();
                  for (int i = 0; i < n; ++i)
                    for (int co = 0; co < cout; ++co) {
                      double acc = 0.0;
                      for (int t = 0; t < lout; ++t) acc += g[(i * cout + co) * lout + t];
                      bi->grad[co] += acc;
                    }
                }
              });
  return out;
}

Tensor conv_transpose1d(Tape* tape, const Tensor& x, const Tensor& kernel, const Tensor& bias,
                        int stride, int padding, int out_length) {
  if (x.rank() != 3 || kernel.rank() != 3 || x.dim(1) != kernel.dim(0)) {
    throw DimensionError("conv_transpose1d: input " + shape_str(x.shape()) +
                         " does not match kernel " + shape_str(kernel.shape()));
  }
  if (stride <= 0 || padding < 0) throw ArgumentError("conv_transpose1d: stride must be >=1, padding >=0");
  const int n = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const int cout = kernel.dim(1), ksize = kernel.dim(2);
  const int lnat = (len - 1) * stride - 2 * padding + ksize;
  if (out_length < 0) out_length = lnat;
  if (lnat < 1 || out_length < lnat || out_length >= lnat + stride) {
    throw DimensionError("conv_transpose1d: output length " + std::to_string(out_length) +
                         " unreachable (natural " + std::to_string(lnat) + ", stride " +
                         std::to_string(stride) + ")");
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw DimensionError("conv_transpose1d: bias " + shape_str(bias.shape()) + " does not match Cout");
  }
  const int lout = out_length;
  Tensor out = Tensor::zeros({n, cout, lout});
  {
    auto xv = x.values(), kv = kernel.values();
    auto ov = out.values();
    for (int i = 0; i < n; ++i)
      for (int co = 0; co < cout; ++co) {
        double* orow = &ov[(i * cout + co) * lout];
        if (bias.defined()) {
          const double bval = bias.values()[co];
          for (int u = 0; u < lout; ++u) orow[u] = bval;
        }
        for (int ci = 0; ci < cin; ++ci) {
          const double* xrow = &xv[(i * cin + ci) * len];
          const double* krow = &kv[(ci * cout + co) * ksize];
          for (int t = 0; t < len; ++t) {
            const double xval = xrow[t];
            if (xval == 0.0) continue;
            const int base = t * stride - padding;
            const int j0 = std::max(0, -base);
            const int j1 = std::min(ksize, lout - base);
            for (int j = j0; j < j1; ++j) orow[base + j] += xval * krow[j];
          }
        }
      }
  }
  ImplPtr xi = x.impl(), ki = kernel.impl(), oi = out.impl();
  ImplPtr bi = bias.defined() ? bias.impl() : nullptr;
  mark_output(tape, out,
              bias.defined() ? std::initializer_list<const Tensor*>{&x, &kernel, &bias}
                             : std::initializer_list<const Tensor*>{&x, &kernel},
              [xi, ki, bi, oi, n, cin, cout, len, lout, ksize, stride, padding]() {
                if (!out_grad_ready(oi)) return;
                const auto& g = oi->grad;
                if (xi->requires_grad) {
                  xi->ensure_grad();
                  for (int i = 0; i < n; ++i)
                    for (int ci = 0; ci < cin; ++ci)
                      for (int co = 0; co < cout; ++co) {
                        const double* grow = &g[(i * cout + co) * lout];
                        const double* krow = &ki->values[(ci * cout + co) * ksize];
                        double* xg = &xi->grad[(i * cin + ci) * len];
                        for (int t = 0; t < len; ++t) {
                          const int base = t * stride - padding;
                          const int j0 = std::max(0, -base);
                          const int j1 = std::min(ksize, lout - base);
                          double acc = 0.0;
                          for (int j = j0; j < j1; ++j) acc += grow[base + j] * krow[j];
                          xg[t] += acc;
                        }
                      }
                }
                if (ki->requires_grad) {
                  ki->ensure_grad();
                  for (int i = 0; i < n; ++i)
                    for (int ci = 0; ci < cin; ++ci)
                      for (int co = 0; co < cout; ++co) {
                        const double* grow = &g[(i * cout + co) * lout];
                        const double* xrow = &xi->values[(i * cin + ci) * len];
                        double* kg = &ki->grad[(ci * cout + co) * ksize];
                        for (int t = 0; t < len; ++t) {
                          const int base = t * stride - padding;
                          const int j0 = std::max(0, -base);
                          const int j1 = std::min(ksize, lout - base);
                          const double xval = xrow[t];
                          for (int j = j0; j < j1; ++j) kg[j] += grow[base + j] * xval;
                        }
                      }
                }
                if (bi && bi->requires_grad) {
                  bi->ensure_grad();
                  for (int i = 0; i < n; ++i)
                    for (int co = 0; co < cout; ++co) {
                      double acc = 0.0;
                      for (int u = 0; u < lout; ++u) acc += g[(i * cout + co) * lout + u];
                      bi->grad[co] += acc;
                    }
                }
              });
  return out;
}

Tensor maxpool1d_same(Tape* tape, const Tensor& x, int window) {
  if (x.rank() != 3) throw DimensionError("maxpool1d_same expects rank-3, got " + shape_str(x.shape()));
  if (window <= 0 || window % 2 == 0) throw ArgumentError("maxpool1d_same: window must be odd");
  const int n = x.dim(0), c = x.dim(1), len = x.dim(2);
  const int half = window / 2;
  Tensor out = Tensor::zeros({n, c, len});
  auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(n) * c * len);
  {
    auto xv = x.values();
    auto ov = out.values();
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const double* xrow = &xv[(i * c + ch) * len];
        double* orow = &ov[(i * c + ch) * len];
        int* arow = &(*argmax)[(static_cast<size_t>(i) * c + ch) * len];
        for (int t = 0; t < len; ++t) {
          const int lo = std::max(0, t - half), hi = std::min(len - 1, t + half);
          int best = lo;
          for (int u = lo + 1; u <= hi; ++u)
            if (xrow[u] > xrow[best]) best = u;  // first max wins ties
          orow[t] = xrow[best];
          arow[t] = best;
        }
      }
  }
  ImplPtr xi = x.impl(), oi = out.impl();
  mark_output(tape, out, {&x}, [xi, oi, argmax, n, c, len]() {
    if (!out_grad_ready(oi) || !xi->requires_grad) return;
    xi->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const size_t base = (static_cast<size_t>(i) * c + ch) * len;
        for (int t = 0; t < len; ++t) xi->grad[base + (*argmax)[base + t]] += oi->grad[base + t];
      }
  });
  return out;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor elementwise(Tape* tape, const Tensor& x, Fwd fwd, Bwd bwd_factor_from_in_out) {
  Tensor out = Tensor::zeros(x.shape());
  auto xv = x.values();
  auto ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(xv[i]);
  ImplPtr xi = x.impl(), oi = out.impl();
  mark_output(tape, out, {&x}, [xi, oi, bwd_factor_from_in_out]() {
    if (!out_grad_ready(oi) || !xi->requires_grad) return;
    xi->ensure_grad();
    for (size_t i = 0; i < oi->grad.size(); ++i)
      xi->grad[i] += oi->grad[i] * bwd_factor_from_in_out(xi->values[i], oi->values[i]);
  });
  return out;
}

}  // namespace

Tensor relu(Tape* tape, const Tensor& x) {
  return elementwise(
      tape, x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(Tape* tape, const Tensor& x, double slope) {
  return elementwise(
      tape, x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double in, double) { return in > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(Tape* tape, const Tensor& x) {
  // Clamped away from the endpoints so saturated inputs still satisfy the
  // open-interval output contract in double precision.
  constexpr double lo = 1e-300;
  const double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  return elementwise(
      tape, x,
      [lo, hi](double v) { return std::min(std::max(1.0 / (1.0 + std::exp(-v)), lo), hi); },
      [](double, double out) { return out * (1.0 - out); });
}

Tensor tanh_act(Tape* tape, const Tensor& x) {
  return elementwise(
      tape, x, [](double v) { return std::tanh(v); },
      [](double, double out) { return 1.0 - out * out; });
}

Tensor softmax_rows(Tape* tape, const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("softmax_rows expects rank-2, got " + shape_str(x.shape()));
  const int n = x.dim(0), k = x.dim(1);
  Tensor out = Tensor::zeros({n, k});
  {
    auto xv = x.values();
    auto ov = out.values();
    for (int i = 0; i < n; ++i) {
      const double* row = &xv[i * k];
      double mx = row[0];
      for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
      double sum = 0.0;
      for (int j = 0; j < k; ++j) {
        const double e = std::exp(row[j] - mx);
        ov[i * k + j] = e;
        sum += e;
      }
      for (int j = 0; j < k; ++j) ov[i * k + j] /= sum;
    }
  }
  ImplPtr xi = x.impl(), oi = out.impl();
  mark_output(tape, out, {&x}, [xi, oi, n, k]() {
    if (!out_grad_ready(oi) || !xi->requires_grad) return;
    xi->ensure_grad();
    for (int i = 0; i < n; ++i) {
      const double* s = &oi->values[i * k];
      const double* g = &oi->grad[i * k];
      double dot = 0.0;
      for (int j = 0; j < k; ++j) dot += g[j] * s[j];
      for (int j = 0; j < k; ++j) xi->grad[i * k + j] += s[j] * (g[j] - dot);
    }
  });
  return out;
}

Tensor leaky_relu_mask(const Tensor& x, double slope) {
  Tensor mask = Tensor::zeros(x.shape());
  auto xv = x.values();
  auto mv = mask.values();
  for (size_t i = 0; i < mv.size(); ++i) mv[i] = xv[i] > 0.0 ? 1.0 : slope;
  return mask;
}

Tensor sigmoid_derivative(const Tensor& sigmoid_out) {
  Tensor d = Tensor::zeros(sigmoid_out.shape());
  auto sv = sigmoid_out.values();
  auto dv = d.values();
  for (size_t i = 0; i < dv.size(); ++i) dv[i] = sv[i] * (1.0 - sv[i]);
  return d;
}

Tensor sum_all(Tape* tape, const Tensor& x) {
  Tensor out = Tensor::zeros({1});
  auto xv = x.values();
  double acc = 0.0;
  for (double v : xv) acc += v;
  out.values()[0] = acc;
  ImplPtr xi = x.impl(), oi = out.impl();
  mark_output(tape, out, {&x}, [xi, oi]() {
    if (!out_grad_ready(oi) || !xi->requires_grad) return;
    xi->ensure_grad();
    const double g = oi->grad[0];
    for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += g;
  });
  return out;
}

Tensor mean_all(Tape* tape, const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.size());
  Tensor out = Tensor::zeros({1});
  auto xv = x.values();
  double acc = 0.0;
  for (double v : xv) acc += v;
  out.values()[0] = acc * inv;
  ImplPtr xi = x.impl(), oi = out.impl();
  mark_output(tape, out, {&x}, [xi, oi, inv]() {
    if (!out_grad_ready(oi) || !xi->requires_grad) return;
    xi->ensure_grad();
    const double g = oi->grad[0] * inv;
    for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += g;
  });
  return out;
}

Tensor mean_over_time(Tape* tape, const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("mean_over_time expects rank-3, got " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1), len = x.dim(2);
  const double inv = 1.0 / len;
  Tensor out = Tensor::zeros({n, c});
  auto xv = x.values();
  auto ov = out.values();
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int t = 0; t < len; ++t) acc += xv[(i * c + ch) * len + t];
      ov[i * c + ch] = acc * inv;
    }
  ImplPtr xi = x.impl(), oi = out.impl();
  mark_output(tape, out, {&x}, [xi, oi, n, c, len, inv]() {
    if (!out_grad_ready(oi) || !xi->requires_grad) return;
    xi->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const double g = oi->grad[i * c + ch] * inv;
        for (int t = 0; t < len; ++t) xi->grad[(i * c + ch) * len + t] += g;
      }
  });
  return out;
}

Tensor rows_l2_norm(Tape* tape, const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("rows_l2_norm expects rank-2, got " + shape_str(x.shape()));
  const int n = x.dim(0), d = x.dim(1);
  Tensor out = Tensor::zeros({n});
  auto xv = x.values();
  auto ov = out.values();
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) acc += xv[i * d + j] * xv[i * d + j];
    ov[i] = std::sqrt(acc);
  }
  ImplPtr xi = x.impl(), oi = out.impl();
  mark_output(tape, out, {&x}, [xi, oi, n, d]() {
    if (!out_grad_ready(oi) || !xi->requires_grad) return;
    xi->ensure_grad();
    for (int i = 0; i < n; ++i) {
      const double norm = std::max(oi->values[i], 1e-12);
      const double g = oi->grad[i] / norm;
      for (int j = 0; j < d; ++j) xi->grad[i * d + j] += g * xi->values[i * d + j];
    }
  });
  return out;
}

Tensor cross_entropy(Tape* tape, const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy expects rank-2 logits");
  const int n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(labels.size()) != n) {
    throw ArgumentError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                        std::to_string(n));
  }
  for (int y : labels) {
    if (y < 0 || y >= k) throw ArgumentError("cross_entropy: label " + std::to_string(y) +
                                             " outside [0," + std::to_string(k) + ")");
  }
  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(n) * k);
  double loss = 0.0;
  {
    auto lv = logits.values();
    for (int i = 0; i < n; ++i) {
      const double* row = &lv[i * k];
      double mx = row[0];
      for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
      double sum = 0.0;
      for (int j = 0; j < k; ++j) {
        const double e = std::exp(row[j] - mx);
        (*probs)[i * k + j] = e;
        sum += e;
      }
      for (int j = 0; j < k; ++j) (*probs)[i * k + j] /= sum;
      loss -= std::log(std::max((*probs)[i * k + labels[i]], 1e-300));
    }
  }
  Tensor out = Tensor::scalar(loss / n);
  ImplPtr li = logits.impl(), oi = out.impl();
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  mark_output(tape, out, {&logits}, [li, oi, probs, labels_copy, n, k]() {
    if (!out_grad_ready(oi) || !li->requires_grad) return;
    li->ensure_grad();
    const double g = oi->grad[0] / n;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) {
        const double indicator = (j == (*labels_copy)[i]) ? 1.0 : 0.0;
        li->grad[i * k + j] += g * ((*probs)[i * k + j] - indicator);
      }
  });
  return out;
}

std::pair<Tensor, Tensor> wasserstein_losses(Tape* tape, const Tensor& critic_real,
                                             const Tensor& critic_fake) {
  if (!critic_real.defined() || !critic_fake.defined() || critic_real.size() == 0 ||
      critic_fake.size() == 0) {
    throw ArgumentError("wasserstein_losses: empty batch");
  }
  Tensor mean_fake = mean_all(tape, critic_fake);
  Tensor mean_real = mean_all(tape, critic_real);
  Tensor critic_loss = sub(tape, mean_fake, mean_real);
  Tensor gen_loss = scale(tape, mean_all(tape, critic_fake), -1.0);
  return {critic_loss, gen_loss};
}

Tensor gradient_penalty(Tape* tape, const InputGradBuilder& critic_input_grad,
                        const Tensor& real, const Tensor& fake, double lambda, Rng& rng) {
  if (!real.same_shape(fake)) {
    throw DimensionError("gradient_penalty: batch shapes differ, " + shape_str(real.shape()) +
                         " vs " + shape_str(fake.shape()));
  }
  if (lambda < 0.0) throw ArgumentError("gradient_penalty: lambda must be >= 0");
  if (lambda == 0.0) return Tensor::scalar(0.0);
  const int n = real.dim(0);
  Tensor eps = Tensor::zeros({n});
  Tensor one_minus_eps = Tensor::zeros({n});
  for (int i = 0; i < n; ++i) {
    const double e = rng.uniform();
    eps.values()[i] = e;
    one_minus_eps.values()[i] = 1.0 - e;
  }
  Tensor interp = add(tape, row_scale(tape, real, eps), row_scale(tape, fake, one_minus_eps));
  Tensor grad_at_interp = critic_input_grad(tape, interp);
  const int64_t per_sample = grad_at_interp.size() / n;
  Tensor flat = reshape(tape, grad_at_interp, {n, static_cast<int>(per_sample)});
  Tensor norms = rows_l2_norm(tape, flat);
  Tensor excess = add_scalar(tape, norms, -1.0);
  return scale(tape, mean_all(tape, square(tape, excess)), lambda);
}

Tensor one_hot(const std::vector<int>& labels, int num_classes) {
  const int n = static_cast<int>(labels.size());
  Tensor out = Tensor::zeros({n, num_classes});
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw ArgumentError("one_hot: label " + std::to_string(labels[i]) + " outside [0," +
                          std::to_string(num_classes) + ")");
    }
    out.values()[i * num_classes + labels[i]] = 1.0;
  }
  return out;
}

Tensor one_hot_channels(const std::vector<int>& labels, int num_classes, int length) {
  const int n = static_cast<int>(labels.size());
  Tensor out = Tensor::zeros({n, num_classes, length});
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw ArgumentError("one_hot_channels: label " + std::to_string(labels[i]) + " outside [0," +
                          std::to_string(num_classes) + ")");
    }
    double* row = &out.values()[(i * num_classes + labels[i]) * length];
    for (int t = 0; t < length; ++t) row[t] = 1.0;
  }
  return out;
}

}  // namespace ops

Optimizer::Optimizer(OptKind kind, double learning_rate, std::vector<Tensor> params,
                     double beta1, double beta2, double epsilon, double rms_decay)
    : kind_(kind),
      learning_rate_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon),
      rms_decay_(rms_decay),
      params_(std::move(params)) {
  if (learning_rate_ <= 0.0) throw ArgumentError("optimizer: learning rate must be positive");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.size()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.size()), 0.0);
  }
}

void Optimizer::step() {
  ++step_count_;
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    if (static_cast<size_t>(p.size()) != m_[pi].size()) {
      throw DimensionError("optimizer: parameter " + std::to_string(pi) +
                           " changed shape under the optimizer");
    }
    auto pv = p.values();
    auto g = p.grad();  // zeros if backward never touched it
    if (kind_ == OptKind::adam) {
      const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
      const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
      for (size_t i = 0; i < m_[pi].size(); ++i) {
        m_[pi][i] = beta1_ * m_[pi][i] + (1.0 - beta1_) * g[i];
        v_[pi][i] = beta2_ * v_[pi][i] + (1.0 - beta2_) * g[i] * g[i];
        const double mhat = m_[pi][i] / bc1;
        const double vhat = v_[pi][i] / bc2;
        pv[i] -= learning_rate_ * mhat / (std::sqrt(vhat) + epsilon_);
      }
    } else {
      for (size_t i = 0; i < m_[pi].size(); ++i) {
        m_[pi][i] = rms_decay_ * m_[pi][i] + (1.0 - rms_decay_) * g[i] * g[i];
        pv[i] -= learning_rate_ * g[i] / (std::sqrt(m_[pi][i]) + epsilon_);
      }
    }
  }
}

void Optimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

std::vector<std::vector<double>> snapshot_params(const std::vector<Tensor>& params) {
  std::vector<std::vector<double>> snap;
  snap.reserve(params.size());
  for (const Tensor& p : params) {
    auto v = p.values();
    snap.emplace_back(v.begin(), v.end());
  }
  return snap;
}

void restore_params(std::vector<Tensor>& params, const std::vector<std::vector<double>>& snap) {
  if (snap.size() != params.size()) throw DimensionError("restore_params: snapshot arity mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    auto v = params[i].values();
    if (snap[i].size() != v.size()) throw DimensionError("restore_params: snapshot shape mismatch");
    std::copy(snap[i].begin(), snap[i].end(), v.begin());
  }
}

}  // namespace dpts
