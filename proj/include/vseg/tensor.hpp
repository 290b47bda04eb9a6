#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vseg/common.hpp"

namespace vseg {

// Dense rank-4 extents (batch, channels, height, width). Kernels reuse the
// same four slots as (out_channels, in_channels, kh, kw); per-channel vectors
// as (1, c, 1, 1).
struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  Shape() = default;
  Shape(int c_, int h_, int w_) : n(1), c(c_), h(h_), w(w_) {}
  Shape(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {}

  std::int64_t numel() const {
    return std::int64_t(n) * c * h * w;
  }
  bool operator==(const Shape& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }
  bool same_spatial(const Shape& o) const { return h == o.h && w == o.w; }
  std::string str() const;
};

template <typename T>
struct Storage {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized lazily by the tape
  bool requires_grad = false;
};

// Value-semantic handle over shared storage. Operations never mutate their
// inputs; parameter updates go through mutable accessors explicitly.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : s_(std::make_shared<Storage<T>>()) {
    require(s.n >= 0 && s.c >= 0 && s.h >= 0 && s.w >= 0, "Tensor: negative extent");
    s_->shape = s;
    s_->value.assign(std::size_t(s.numel()), fill);
  }
  Tensor(Shape s, std::vector<T> data) : s_(std::make_shared<Storage<T>>()) {
    require(std::int64_t(data.size()) == s.numel(), "Tensor: data length != shape product");
    s_->shape = s;
    s_->value = std::move(data);
  }

  static Tensor zeros(Shape s) { return Tensor(s, T(0)); }
  static Tensor full(Shape s, T v) { return Tensor(s, v); }
  static Tensor scalar(T v) { return Tensor(Shape(1, 1, 1), std::vector<T>{v}); }

  bool defined() const { return s_ != nullptr; }
  const Shape& shape() const { return s_->shape; }
  std::int64_t numel() const { return s_->shape.numel(); }
  bool is_scalar() const { return numel() == 1; }

  const T* data() const { return s_->value.data(); }
  T* mutable_data() { return s_->value.data(); }
  const std::vector<T>& vec() const { return s_->value; }
  std::vector<T>& mutable_vec() { return s_->value; }

  T at(int c, int y, int x) const { return at(0, c, y, x); }
  T at(int n, int c, int y, int x) const {
    const Shape& s = s_->shape;
    return s_->value[std::size_t(((std::int64_t(n) * s.c + c) * s.h + y) * s.w + x)];
  }
  T& at_mut(int n, int c, int y, int x) {
    const Shape& s = s_->shape;
    return s_->value[std::size_t(((std::int64_t(n) * s.c + c) * s.h + y) * s.w + x)];
  }
  T item() const {
    require(is_scalar(), "Tensor::item: not a scalar");
    return s_->value[0];
  }

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool b) { s_->requires_grad = b; }

  bool has_grad() const { return !s_->grad.empty(); }
  const std::vector<T>& grad() const { return s_->grad; }
  std::vector<T>& mutable_grad() { return s_->grad; }

  Tensor clone() const {
    Tensor t(s_->shape, s_->value);
    t.s_->requires_grad = s_->requires_grad;
    return t;
  }

  std::shared_ptr<Storage<T>> storage() const { return s_; }
  bool same_storage(const Tensor& o) const { return s_ == o.s_; }

 private:
  std::shared_ptr<Storage<T>> s_;
};

// Ordered record of executed operations. Backward replays nodes in exact
// reverse execution order; gradients accumulate additively at fan-out points.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> backward_fn,
              std::initializer_list<Tensor<T>> involved) {
    nodes_.push_back(std::move(backward_fn));
    for (const auto& t : involved)
      if (t.defined()) touched_.push_back(t.storage());
  }

  bool empty() const { return nodes_.empty(); }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and accumulates into every touched storage.
  void backward(const Tensor<T>& loss) {
    require(!nodes_.empty(), "Tape::backward: tape is empty");
    require(loss.is_scalar(), "Tape::backward: loss must be a scalar tensor");
    require(!spent_, "Tape::backward: called twice without reset");
    spent_ = true;
    for (auto& s : touched_) s->grad.assign(s->value.size(), T(0));
    auto ls = loss.storage();
    ls->grad.assign(1, T(1));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  void reset() {
    nodes_.clear();
    touched_.clear();
    spent_ = false;
  }

 private:
  std::vector<std::function<void()>> nodes_;
  std::vector<std::shared_ptr<Storage<T>>> touched_;
  bool spent_ = false;
};

// Per-execution context: optional tape, MAC instrumentation and scratch
// buffers. No global mutable state; distinct contexts may run on distinct
// threads.
template <typename T>
struct Context {
  Tape<T>* tape = nullptr;
  bool check_finite = true;
  bool count_macs = false;
  std::uint64_t conv_macs = 0;

  // scratch reused by conv kernels
  std::vector<T> col;
  std::vector<T> pad;

  bool recording() const { return tape != nullptr; }
};

enum class Ew { Add, Mul, Sigmoid, Tanh, Relu };

// --- forward + reverse-mode operations ----------------------------------
// "same" zero padding everywhere; output spatial extents equal input extents.

template <typename T>
Tensor<T> conv2d(Context<T>& ctx, const Tensor<T>& input, const Tensor<T>& kernel,
                 const Tensor<T>& bias);

template <typename T>
Tensor<T> depthwise_conv2d(Context<T>& ctx, const Tensor<T>& input,
                           const Tensor<T>& kernel, const Tensor<T>& bias);

template <typename T>
Tensor<T> pointwise_conv2d(Context<T>& ctx, const Tensor<T>& input,
                           const Tensor<T>& kernel, const Tensor<T>& bias);

template <typename T>
Tensor<T> elementwise(Context<T>& ctx, Ew op, const Tensor<T>& a,
                      const Tensor<T>& b = Tensor<T>());

template <typename T>
Tensor<T> add(Context<T>& ctx, const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(ctx, Ew::Add, a, b);
}
template <typename T>
Tensor<T> mul(Context<T>& ctx, const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(ctx, Ew::Mul, a, b);
}
template <typename T>
Tensor<T> sigmoid(Context<T>& ctx, const Tensor<T>& a) {
  return elementwise(ctx, Ew::Sigmoid, a);
}
template <typename T>
Tensor<T> tanh_op(Context<T>& ctx, const Tensor<T>& a) {
  return elementwise(ctx, Ew::Tanh, a);
}
template <typename T>
Tensor<T> relu(Context<T>& ctx, const Tensor<T>& a) {
  return elementwise(ctx, Ew::Relu, a);
}

template <typename T>
Tensor<T> concat_channels(Context<T>& ctx, const Tensor<T>& a, const Tensor<T>& b);

// factor 2 is upscale, factor 0.5 downscale; align-corners=false convention.
template <typename T>
Tensor<T> resize_bilinear(Context<T>& ctx, const Tensor<T>& input, double factor);

template <typename T>
Tensor<T> softmax_channels(Context<T>& ctx, const Tensor<T>& input);

// y[n,c,h,w] = x[n,c,h,w] * scale[c]  (per-channel multiplier, e.g. peepholes)
template <typename T>
Tensor<T> channel_mul(Context<T>& ctx, const Tensor<T>& x, const Tensor<T>& scale);

// y[n,c,h,w] = x[n,c,h,w] * gamma[c] + beta[c]
template <typename T>
Tensor<T> channel_affine(Context<T>& ctx, const Tensor<T>& x, const Tensor<T>& gamma,
                         const Tensor<T>& beta);

template <typename T>
Tensor<T> sum_all(Context<T>& ctx, const Tensor<T>& x);

template <typename T>
Tensor<T> scale(Context<T>& ctx, const Tensor<T>& x, T alpha);

// mean over pixels of -log(probs[label]); probs is a (K,H,W) simplex map.
template <typename T>
Tensor<T> nll_loss(Context<T>& ctx, const Tensor<T>& probs,
                   const std::vector<std::uint8_t>& labels);

// dense GEMM helpers (row-major). C must be preinitialized by the caller.
template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c);  // C += A*B
template <typename T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c);  // C += A^T*B (A is k x m)
template <typename T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c);  // C += A*B^T (B is n x k)

}  // namespace vseg
