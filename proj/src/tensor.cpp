#include "vseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace vseg {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

namespace {

template <typename T>
void check_finite(const Context<T>& ctx, const Tensor<T>& t, const char* op) {
  if (!ctx.check_finite) return;
  for (const T& v : t.vec())
    if (!std::isfinite(double(v)))
      fail(std::string(op) + ": produced non-finite values");
}

template <typename T>
bool want_grad(const Context<T>& ctx, const Tensor<T>& a) {
  return ctx.recording() && a.defined() && a.requires_grad();
}

}  // namespace

// ---------------------------------------------------------------- GEMM ---

template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c) {
  constexpr int JB = 1024;
  for (int j0 = 0; j0 < n; j0 += JB) {
    const int j1 = std::min(n, j0 + JB);
    int i = 0;
    for (; i + 4 <= m; i += 4) {
      T* c0 = c + std::size_t(i + 0) * n;
      T* c1 = c + std::size_t(i + 1) * n;
      T* c2 = c + std::size_t(i + 2) * n;
      T* c3 = c + std::size_t(i + 3) * n;
      const T* a0 = a + std::size_t(i + 0) * k;
      const T* a1 = a + std::size_t(i + 1) * k;
      const T* a2 = a + std::size_t(i + 2) * k;
      const T* a3 = a + std::size_t(i + 3) * k;
      for (int p = 0; p < k; ++p) {
        const T v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
        const T* bp = b + std::size_t(p) * n;
        for (int j = j0; j < j1; ++j) {
          const T bj = bp[j];
          c0[j] += v0 * bj;
          c1[j] += v1 * bj;
          c2[j] += v2 * bj;
          c3[j] += v3 * bj;
        }
      }
    }
    for (; i < m; ++i) {
      T* ci = c + std::size_t(i) * n;
      const T* ai = a + std::size_t(i) * k;
      for (int p = 0; p < k; ++p) {
        const T v = ai[p];
        const T* bp = b + std::size_t(p) * n;
        for (int j = j0; j < j1; ++j) ci[j] += v * bp[j];
      }
    }
  }
}

template <typename T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c) {
  // A is k x m; rank-1 updates C[i,:] += A[p,i] * B[p,:]
  for (int p = 0; p < k; ++p) {
    const T* ap = a + std::size_t(p) * m;
    const T* bp = b + std::size_t(p) * n;
    for (int i = 0; i < m; ++i) {
      const T v = ap[i];
      if (v == T(0)) continue;
      T* ci = c + std::size_t(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += v * bp[j];
    }
  }
}

template <typename T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c) {
  // B is n x k; C[i,j] += dot(A[i,:], B[j,:])
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    const T* a0 = a + std::size_t(i + 0) * k;
    const T* a1 = a + std::size_t(i + 1) * k;
    const T* a2 = a + std::size_t(i + 2) * k;
    const T* a3 = a + std::size_t(i + 3) * k;
    for (int j = 0; j < n; ++j) {
      const T* bj = b + std::size_t(j) * k;
      T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
      for (int p = 0; p < k; ++p) {
        const T v = bj[p];
        s0 += a0[p] * v;
        s1 += a1[p] * v;
        s2 += a2[p] * v;
        s3 += a3[p] * v;
      }
      c[std::size_t(i + 0) * n + j] += s0;
      c[std::size_t(i + 1) * n + j] += s1;
      c[std::size_t(i + 2) * n + j] += s2;
      c[std::size_t(i + 3) * n + j] += s3;
    }
  }
  for (; i < m; ++i) {
    const T* ai = a + std::size_t(i) * k;
    for (int j = 0; j < n; ++j) {
      const T* bj = b + std::size_t(j) * k;
      T s = 0;
      for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
      c[std::size_t(i) * n + j] += s;
    }
  }
}

// ------------------------------------------------------- im2col helpers ---

namespace {

// zero-padded copy of one sample: (C, H + kh - 1, W + kw - 1)
template <typename T>
void pad_sample(const T* x, int C, int H, int W, int kh, int kw, std::vector<T>& pad) {
  const int ph = kh / 2, pw = kw / 2;
  const int PH = H + kh - 1, PW = W + kw - 1;
  pad.assign(std::size_t(C) * PH * PW, T(0));
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      std::memcpy(pad.data() + (std::size_t(c) * PH + (y + ph)) * PW + pw,
                  x + (std::size_t(c) * H + y) * W, sizeof(T) * std::size_t(W));
}

// col is (C*kh*kw, H*W); row r = (c*kh + ky)*kw + kx
template <typename T>
void im2col(const std::vector<T>& pad, int C, int H, int W, int kh, int kw,
            std::vector<T>& col) {
  const int PH = H + kh - 1, PW = W + kw - 1;
  col.resize(std::size_t(C) * kh * kw * H * W);
  std::size_t r = 0;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx, ++r)
        for (int y = 0; y < H; ++y)
          std::memcpy(col.data() + (r * H + y) * W,
                      pad.data() + (std::size_t(c) * PH + (y + ky)) * PW + kx,
                      sizeof(T) * std::size_t(W));
  (void)PH;
}

// transpose of im2col: accumulates col gradients back into an x-shaped grad
template <typename T>
void col2im_acc(const std::vector<T>& dcol, int C, int H, int W, int kh, int kw, T* dx) {
  const int ph = kh / 2, pw = kw / 2;
  std::size_t r = 0;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx, ++r) {
        const int dy = ky - ph, dxo = kx - pw;
        for (int y = 0; y < H; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          const T* src = dcol.data() + (r * H + y) * W;
          T* dst = dx + (std::size_t(c) * H + sy) * W + dxo;
          const int x0 = std::max(0, -dxo), x1 = std::min(W, W - dxo);
          for (int x = x0; x < x1; ++x) dst[x] += src[x];
        }
      }
}

// shared conv core: one sample, already validated
template <typename T>
void conv_forward_sample(Context<T>& ctx, const T* x, const T* w, const T* bias, T* y,
                         int I, int O, int H, int W, int kh, int kw) {
  pad_sample(x, I, H, W, kh, kw, ctx.pad);
  im2col(ctx.pad, I, H, W, kh, kw, ctx.col);
  const std::size_t hw = std::size_t(H) * W;
  for (int o = 0; o < O; ++o) {
    const T b = bias ? bias[o] : T(0);
    std::fill(y + o * hw, y + (o + 1) * hw, b);
  }
  gemm_nn(O, int(hw), I * kh * kw, w, ctx.col.data(), y);
}

template <typename T>
struct ConvGradBuffers {
  std::vector<T> pad, col, dcol;
};

// shared conv backward: accumulates into dx/dw/db (any may be null)
template <typename T>
void conv_backward_sample(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db,
                          int I, int O, int H, int W, int kh, int kw,
                          ConvGradBuffers<T>& buf) {
  const std::size_t hw = std::size_t(H) * W;
  if (db) {
    for (int o = 0; o < O; ++o) {
      T s = 0;
      const T* g = dy + o * hw;
      for (std::size_t j = 0; j < hw; ++j) s += g[j];
      db[o] += s;
    }
  }
  if (dw || dx) {
    pad_sample(x, I, H, W, kh, kw, buf.pad);
    im2col(buf.pad, I, H, W, kh, kw, buf.col);
  }
  if (dw) gemm_nt(O, I * kh * kw, int(hw), dy, buf.col.data(), dw);
  if (dx) {
    buf.dcol.assign(std::size_t(I) * kh * kw * hw, T(0));
    gemm_tn(I * kh * kw, int(hw), O, w, dy, buf.dcol.data());
    col2im_acc(buf.dcol, I, H, W, kh, kw, dx);
  }
}

}  // namespace

// -------------------------------------------------------------- conv2d ---

template <typename T>
Tensor<T> conv2d(Context<T>& ctx, const Tensor<T>& input, const Tensor<T>& kernel,
                 const Tensor<T>& bias) {
  const Shape& xs = input.shape();
  const Shape& ks = kernel.shape();
  require(ks.h % 2 == 1 && ks.w % 2 == 1,
          "conv2d: kernel extents must be odd, got " + ks.str());
  require(ks.c == xs.c, "conv2d: channel mismatch, input " + xs.str() + " kernel " + ks.str());
  if (bias.defined())
    require(bias.shape().c == ks.n && bias.numel() == ks.n,
            "conv2d: bias size must equal output channels");

  const int N = xs.n, I = xs.c, H = xs.h, W = xs.w;
  const int O = ks.n, kh = ks.h, kw = ks.w;
  Tensor<T> out(Shape(N, O, H, W));
  const T* bp = bias.defined() ? bias.data() : nullptr;
  for (int n = 0; n < N; ++n)
    conv_forward_sample(ctx, input.data() + std::size_t(n) * I * H * W, kernel.data(), bp,
                        out.mutable_data() + std::size_t(n) * O * H * W, I, O, H, W, kh, kw);
  if (ctx.count_macs)
    ctx.conv_macs += std::uint64_t(N) * O * I * kh * kw * std::uint64_t(H) * W;
  check_finite(ctx, out, "conv2d");

  if (ctx.recording() &&
      (input.requires_grad() || kernel.requires_grad() || want_grad(ctx, bias))) {
    out.set_requires_grad(true);
    Tensor<T> x = input, k = kernel, b = bias, y = out;
    ctx.tape->record(
        [x, k, b, y, N, I, O, H, W, kh, kw]() {
          ConvGradBuffers<T> buf;
          auto xs_ = x.storage();
          auto ks_ = k.storage();
          T* dx = xs_->requires_grad ? xs_->grad.data() : nullptr;
          T* dw = ks_->requires_grad ? ks_->grad.data() : nullptr;
          T* db = (b.defined() && b.requires_grad()) ? b.storage()->grad.data() : nullptr;
          for (int n = 0; n < N; ++n)
            conv_backward_sample(x.data() + std::size_t(n) * I * H * W, k.data(),
                                 y.grad().data() + std::size_t(n) * O * H * W,
                                 dx ? dx + std::size_t(n) * I * H * W : nullptr, dw, db,
                                 I, O, H, W, kh, kw, buf);
        },
        {input, kernel, bias, out});
  }
  return out;
}

// ----------------------------------------------------- depthwise_conv2d ---

template <typename T>
Tensor<T> depthwise_conv2d(Context<T>& ctx, const Tensor<T>& input,
                           const Tensor<T>& kernel, const Tensor<T>& bias) {
  const Shape& xs = input.shape();
  const Shape& ks = kernel.shape();
  require(ks.h % 2 == 1 && ks.w % 2 == 1, "depthwise_conv2d: kernel extents must be odd");
  require(ks.n == xs.c && ks.c == 1,
          "depthwise_conv2d: kernel channels must match input channels, input " + xs.str() +
              " kernel " + ks.str());
  if (bias.defined())
    require(bias.shape().c == xs.c && bias.numel() == xs.c,
            "depthwise_conv2d: bias size must equal channel count");

  const int N = xs.n, C = xs.c, H = xs.h, W = xs.w;
  const int kh = ks.h, kw = ks.w;
  Tensor<T> out(Shape(N, C, H, W));
  const T* bp = bias.defined() ? bias.data() : nullptr;
  const std::size_t plane = std::size_t(H) * W;
  // per-channel single-channel convolutions through the same conv core, so a
  // one-channel depthwise result is bitwise equal to conv2d with I=O=1
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      conv_forward_sample(ctx, input.data() + (std::size_t(n) * C + c) * plane,
                          kernel.data() + std::size_t(c) * kh * kw, bp ? bp + c : nullptr,
                          out.mutable_data() + (std::size_t(n) * C + c) * plane, 1, 1, H, W,
                          kh, kw);
  if (ctx.count_macs)
    ctx.conv_macs += std::uint64_t(N) * C * kh * kw * std::uint64_t(H) * W;
  check_finite(ctx, out, "depthwise_conv2d");

  if (ctx.recording() &&
      (input.requires_grad() || kernel.requires_grad() || want_grad(ctx, bias))) {
    out.set_requires_grad(true);
    Tensor<T> x = input, k = kernel, b = bias, y = out;
    ctx.tape->record(
        [x, k, b, y, N, C, H, W, kh, kw, plane]() {
          ConvGradBuffers<T> buf;
          auto xs_ = x.storage();
          auto ks_ = k.storage();
          T* dx = xs_->requires_grad ? xs_->grad.data() : nullptr;
          T* dw = ks_->requires_grad ? ks_->grad.data() : nullptr;
          T* db = (b.defined() && b.requires_grad()) ? b.storage()->grad.data() : nullptr;
          for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
              conv_backward_sample(x.data() + (std::size_t(n) * C + c) * plane,
                                   k.data() + std::size_t(c) * kh * kw,
                                   y.grad().data() + (std::size_t(n) * C + c) * plane,
                                   dx ? dx + (std::size_t(n) * C + c) * plane : nullptr,
                                   dw ? dw + std::size_t(c) * kh * kw : nullptr,
                                   db ? db + c : nullptr, 1, 1, H, W, kh, kw, buf);
        },
        {input, kernel, bias, out});
  }
  return out;
}

// ----------------------------------------------------- pointwise_conv2d ---

template <typename T>
Tensor<T> pointwise_conv2d(Context<T>& ctx, const Tensor<T>& input,
                           const Tensor<T>& kernel, const Tensor<T>& bias) {
  const Shape& xs = input.shape();
  const Shape& ks = kernel.shape();
  require(ks.h == 1 && ks.w == 1, "pointwise_conv2d: kernel must be 1x1");
  require(ks.c == xs.c, "pointwise_conv2d: channel mismatch, input " + xs.str() +
                            " kernel " + ks.str());
  if (bias.defined())
    require(bias.shape().c == ks.n && bias.numel() == ks.n,
            "pointwise_conv2d: bias size must equal output channels");

  const int N = xs.n, I = xs.c, H = xs.h, W = xs.w, O = ks.n;
  const std::size_t hw = std::size_t(H) * W;
  Tensor<T> out(Shape(N, O, H, W));
  for (int n = 0; n < N; ++n) {
    T* y = out.mutable_data() + std::size_t(n) * O * hw;
    for (int o = 0; o < O; ++o) {
      const T b = bias.defined() ? bias.data()[o] : T(0);
      std::fill(y + o * hw, y + (o + 1) * hw, b);
    }
    gemm_nn(O, int(hw), I, kernel.data(), input.data() + std::size_t(n) * I * hw, y);
  }
  if (ctx.count_macs) ctx.conv_macs += std::uint64_t(N) * O * I * std::uint64_t(H) * W;
  check_finite(ctx, out, "pointwise_conv2d");

  if (ctx.recording() &&
      (input.requires_grad() || kernel.requires_grad() || want_grad(ctx, bias))) {
    out.set_requires_grad(true);
    Tensor<T> x = input, k = kernel, b = bias, y = out;
    ctx.tape->record(
        [x, k, b, y, N, I, O, hw]() {
          auto xs_ = x.storage();
          auto ks_ = k.storage();
          for (int n = 0; n < N; ++n) {
            const T* dy = y.grad().data() + std::size_t(n) * O * hw;
            const T* xn = x.data() + std::size_t(n) * I * hw;
            if (ks_->requires_grad) gemm_nt(O, I, int(hw), dy, xn, ks_->grad.data());
            if (xs_->requires_grad)
              gemm_tn(I, int(hw), O, k.data(), dy,
                      xs_->grad.data() + std::size_t(n) * I * hw);
            if (b.defined() && b.requires_grad()) {
              T* db = b.storage()->grad.data();
              for (int o = 0; o < O; ++o) {
                T s = 0;
                for (std::size_t j = 0; j < hw; ++j) s += dy[o * hw + j];
                db[o] += s;
              }
            }
          }
        },
        {input, kernel, bias, out});
  }
  return out;
}

// ---------------------------------------------------------- elementwise ---

template <typename T>
Tensor<T> elementwise(Context<T>& ctx, Ew op, const Tensor<T>& a, const Tensor<T>& b) {
  const bool binary = (op == Ew::Add || op == Ew::Mul);
  require(a.defined(), "elementwise: first operand undefined");
  if (binary) {
    require(b.defined(), "elementwise: binary op needs two operands");
    require(a.shape() == b.shape(), "elementwise: shape mismatch " + a.shape().str() +
                                        " vs " + b.shape().str());
  }
  const std::size_t n = std::size_t(a.numel());
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  T* py = out.mutable_data();
  switch (op) {
    case Ew::Add: {
      const T* pb = b.data();
      for (std::size_t i = 0; i < n; ++i) py[i] = pa[i] + pb[i];
      break;
    }
    case Ew::Mul: {
      const T* pb = b.data();
      for (std::size_t i = 0; i < n; ++i) py[i] = pa[i] * pb[i];
      break;
    }
    case Ew::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) py[i] = T(1) / (T(1) + std::exp(-pa[i]));
      break;
    case Ew::Tanh:
      for (std::size_t i = 0; i < n; ++i) py[i] = std::tanh(pa[i]);
      break;
    case Ew::Relu:
      for (std::size_t i = 0; i < n; ++i) py[i] = pa[i] > T(0) ? pa[i] : T(0);
      break;
  }
  check_finite(ctx, out, "elementwise");

  const bool rg = ctx.recording() && (a.requires_grad() || (binary && b.requires_grad()));
  if (rg) {
    out.set_requires_grad(true);
    Tensor<T> ta = a, tb = b, ty = out;
    ctx.tape->record(
        [op, ta, tb, ty, n]() {
          const T* dy = ty.grad().data();
          auto as_ = ta.storage();
          switch (op) {
            case Ew::Add: {
              if (as_->requires_grad) {
                T* da = as_->grad.data();
                for (std::size_t i = 0; i < n; ++i) da[i] += dy[i];
              }
              auto bs_ = tb.storage();
              if (bs_->requires_grad) {
                T* db = bs_->grad.data();
                for (std::size_t i = 0; i < n; ++i) db[i] += dy[i];
              }
              break;
            }
            case Ew::Mul: {
              auto bs_ = tb.storage();
              if (as_->requires_grad) {
                T* da = as_->grad.data();
                const T* pb = tb.data();
                for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] * pb[i];
              }
              if (bs_->requires_grad) {
                T* db = bs_->grad.data();
                const T* pa = ta.data();
                for (std::size_t i = 0; i < n; ++i) db[i] += dy[i] * pa[i];
              }
              break;
            }
            case Ew::Sigmoid: {
              T* da = as_->grad.data();
              const T* py = ty.data();
              for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] * py[i] * (T(1) - py[i]);
              break;
            }
            case Ew::Tanh: {
              T* da = as_->grad.data();
              const T* py = ty.data();
              for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] * (T(1) - py[i] * py[i]);
              break;
            }
            case Ew::Relu: {
              T* da = as_->grad.data();
              const T* pa = ta.data();
              for (std::size_t i = 0; i < n; ++i)
                if (pa[i] > T(0)) da[i] += dy[i];
              break;
            }
          }
        },
        {a, b, out});
  }
  return out;
}

// ------------------------------------------------------- concat_channels ---

template <typename T>
Tensor<T> concat_channels(Context<T>& ctx, const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  require(as.n == bs.n && as.same_spatial(bs),
          "concat_channels: spatial mismatch " + as.str() + " vs " + bs.str());
  const int N = as.n, Ca = as.c, Cb = bs.c, H = as.h, W = as.w;
  const std::size_t plane = std::size_t(H) * W;
  Tensor<T> out(Shape(N, Ca + Cb, H, W));
  for (int n = 0; n < N; ++n) {
    std::memcpy(out.mutable_data() + std::size_t(n) * (Ca + Cb) * plane,
                a.data() + std::size_t(n) * Ca * plane, sizeof(T) * Ca * plane);
    std::memcpy(out.mutable_data() + (std::size_t(n) * (Ca + Cb) + Ca) * plane,
                b.data() + std::size_t(n) * Cb * plane, sizeof(T) * Cb * plane);
  }

  if (ctx.recording() && (a.requires_grad() || b.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<T> ta = a, tb = b, ty = out;
    ctx.tape->record(
        [ta, tb, ty, N, Ca, Cb, plane]() {
          const T* dy = ty.grad().data();
          auto as_ = ta.storage();
          auto bs_ = tb.storage();
          for (int n = 0; n < N; ++n) {
            if (as_->requires_grad) {
              T* da = as_->grad.data() + std::size_t(n) * Ca * plane;
              const T* src = dy + std::size_t(n) * (Ca + Cb) * plane;
              for (std::size_t i = 0; i < Ca * plane; ++i) da[i] += src[i];
            }
            if (bs_->requires_grad) {
              T* db = bs_->grad.data() + std::size_t(n) * Cb * plane;
              const T* src = dy + (std::size_t(n) * (Ca + Cb) + Ca) * plane;
              for (std::size_t i = 0; i < Cb * plane; ++i) db[i] += src[i];
            }
          }
        },
        {a, b, out});
  }
  return out;
}

// ------------------------------------------------------- resize_bilinear ---

namespace {

struct LerpTap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1-w1
};

// align-corners=false source taps for one axis
inline std::vector<LerpTap> upscale_taps(int in, int out) {
  std::vector<LerpTap> taps(out);
  for (int d = 0; d < out; ++d) {
    double src = (d + 0.5) * double(in) / out - 0.5;
    double f = std::floor(src);
    int i0 = int(f);
    double w1 = src - f;
    int i1 = i0 + 1;
    if (i0 < 0) { i0 = 0; i1 = 0; w1 = 0.0; }
    if (i1 >= in) { i1 = in - 1; i0 = in - 1; w1 = 0.0; }
    taps[d] = {i0, i1, w1};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> resize_bilinear(Context<T>& ctx, const Tensor<T>& input, double factor) {
  const Shape& xs = input.shape();
  require(factor == 2.0 || factor == 0.5, "resize_bilinear: factor must be 0.5 or 2");
  const int N = xs.n, C = xs.c, H = xs.h, W = xs.w;
  int OH, OW;
  if (factor == 0.5) {
    require(H % 2 == 0 && W % 2 == 0,
            "resize_bilinear: extents must be divisible by 2 to downscale, got " + xs.str());
    OH = H / 2;
    OW = W / 2;
  } else {
    OH = H * 2;
    OW = W * 2;
  }
  Tensor<T> out(Shape(N, C, OH, OW));

  if (factor == 0.5) {
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T* src = input.data() + (std::size_t(n) * C + c) * H * W;
        T* dst = out.mutable_data() + (std::size_t(n) * C + c) * OH * OW;
        for (int y = 0; y < OH; ++y)
          for (int x = 0; x < OW; ++x)
            dst[y * OW + x] = T(0.25) * (src[(2 * y) * W + 2 * x] + src[(2 * y) * W + 2 * x + 1] +
                                         src[(2 * y + 1) * W + 2 * x] +
                                         src[(2 * y + 1) * W + 2 * x + 1]);
      }
  } else {
    const auto ty = upscale_taps(H, OH);
    const auto tx = upscale_taps(W, OW);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T* src = input.data() + (std::size_t(n) * C + c) * H * W;
        T* dst = out.mutable_data() + (std::size_t(n) * C + c) * OH * OW;
        for (int y = 0; y < OH; ++y) {
          const LerpTap& a = ty[y];
          for (int x = 0; x < OW; ++x) {
            const LerpTap& b = tx[x];
            const T v00 = src[a.i0 * W + b.i0], v01 = src[a.i0 * W + b.i1];
            const T v10 = src[a.i1 * W + b.i0], v11 = src[a.i1 * W + b.i1];
            const T top = v00 + T(b.w1) * (v01 - v00);
            const T bot = v10 + T(b.w1) * (v11 - v10);
            dst[y * OW + x] = top + T(a.w1) * (bot - top);
          }
        }
      }
  }
  check_finite(ctx, out, "resize_bilinear");

  if (ctx.recording() && input.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<T> tx_ = input, ty_ = out;
    ctx.tape->record(
        [tx_, ty_, factor, N, C, H, W, OH, OW]() {
          T* dx = tx_.storage()->grad.data();
          const T* dy = ty_.grad().data();
          if (factor == 0.5) {
            for (int n = 0; n < N; ++n)
              for (int c = 0; c < C; ++c) {
                const T* g = dy + (std::size_t(n) * C + c) * OH * OW;
                T* d = dx + (std::size_t(n) * C + c) * H * W;
                for (int y = 0; y < OH; ++y)
                  for (int x = 0; x < OW; ++x) {
                    const T q = T(0.25) * g[y * OW + x];
                    d[(2 * y) * W + 2 * x] += q;
                    d[(2 * y) * W + 2 * x + 1] += q;
                    d[(2 * y + 1) * W + 2 * x] += q;
                    d[(2 * y + 1) * W + 2 * x + 1] += q;
                  }
              }
          } else {
            const auto ta = upscale_taps(H, OH);
            const auto tb = upscale_taps(W, OW);
            for (int n = 0; n < N; ++n)
              for (int c = 0; c < C; ++c) {
                const T* g = dy + (std::size_t(n) * C + c) * OH * OW;
                T* d = dx + (std::size_t(n) * C + c) * H * W;
                for (int y = 0; y < OH; ++y)
                  for (int x = 0; x < OW; ++x) {
                    const T q = g[y * OW + x];
                    const double wy1 = ta[y].w1, wx1 = tb[x].w1;
                    d[ta[y].i0 * W + tb[x].i0] += T((1 - wy1) * (1 - wx1)) * q;
                    d[ta[y].i0 * W + tb[x].i1] += T((1 - wy1) * wx1) * q;
                    d[ta[y].i1 * W + tb[x].i0] += T(wy1 * (1 - wx1)) * q;
                    d[ta[y].i1 * W + tb[x].i1] += T(wy1 * wx1) * q;
                  }
              }
          }
        },
        {input, out});
  }
  return out;
}

// ------------------------------------------------------ softmax_channels ---

template <typename T>
Tensor<T> softmax_channels(Context<T>& ctx, const Tensor<T>& input) {
  const Shape& xs = input.shape();
  require(xs.c >= 1, "softmax_channels: need at least one channel");
  const int N = xs.n, C = xs.c, H = xs.h, W = xs.w;
  const std::size_t plane = std::size_t(H) * W;
  Tensor<T> out(xs);
  for (int n = 0; n < N; ++n) {
    const T* x = input.data() + std::size_t(n) * C * plane;
    T* y = out.mutable_data() + std::size_t(n) * C * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      T m = x[p];
      for (int c = 1; c < C; ++c) m = std::max(m, x[c * plane + p]);
      T s = 0;
      for (int c = 0; c < C; ++c) {
        const T e = std::exp(x[c * plane + p] - m);
        y[c * plane + p] = e;
        s += e;
      }
      const T inv = T(1) / s;
      for (int c = 0; c < C; ++c) y[c * plane + p] *= inv;
    }
  }
  check_finite(ctx, out, "softmax_channels");

  if (ctx.recording() && input.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<T> tx = input, ty = out;
    ctx.tape->record(
        [tx, ty, N, C, plane]() {
          T* dx = tx.storage()->grad.data();
          const T* dy = ty.grad().data();
          const T* y = ty.data();
          for (int n = 0; n < N; ++n) {
            const std::size_t base = std::size_t(n) * C * plane;
            for (std::size_t p = 0; p < plane; ++p) {
              T dot = 0;
              for (int c = 0; c < C; ++c)
                dot += dy[base + c * plane + p] * y[base + c * plane + p];
              for (int c = 0; c < C; ++c)
                dx[base + c * plane + p] +=
                    y[base + c * plane + p] * (dy[base + c * plane + p] - dot);
            }
          }
        },
        {input, out});
  }
  return out;
}

// ------------------------------------------- channel_mul / channel_affine ---

template <typename T>
Tensor<T> channel_mul(Context<T>& ctx, const Tensor<T>& x, const Tensor<T>& s) {
  const Shape& xs = x.shape();
  require(s.numel() == xs.c, "channel_mul: scale length must equal channel count");
  const int N = xs.n, C = xs.c;
  const std::size_t plane = std::size_t(xs.h) * xs.w;
  Tensor<T> out(xs);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T v = s.data()[c];
      const T* px = x.data() + (std::size_t(n) * C + c) * plane;
      T* py = out.mutable_data() + (std::size_t(n) * C + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) py[i] = px[i] * v;
    }
  check_finite(ctx, out, "channel_mul");

  if (ctx.recording() && (x.requires_grad() || s.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<T> tx = x, ts = s, ty = out;
    ctx.tape->record(
        [tx, ts, ty, N, C, plane]() {
          const T* dy = ty.grad().data();
          auto xs_ = tx.storage();
          auto ss_ = ts.storage();
          for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
              const std::size_t off = (std::size_t(n) * C + c) * plane;
              if (xs_->requires_grad) {
                const T v = ts.data()[c];
                T* dx = xs_->grad.data() + off;
                for (std::size_t i = 0; i < plane; ++i) dx[i] += dy[off + i] * v;
              }
              if (ss_->requires_grad) {
                T acc = 0;
                const T* px = tx.data() + off;
                for (std::size_t i = 0; i < plane; ++i) acc += dy[off + i] * px[i];
                ss_->grad[c] += acc;
              }
            }
        },
        {x, s, out});
  }
  return out;
}

template <typename T>
Tensor<T> channel_affine(Context<T>& ctx, const Tensor<T>& x, const Tensor<T>& gamma,
                         const Tensor<T>& beta) {
  const Shape& xs = x.shape();
  require(gamma.numel() == xs.c && beta.numel() == xs.c,
          "channel_affine: gamma/beta length must equal channel count");
  const int N = xs.n, C = xs.c;
  const std::size_t plane = std::size_t(xs.h) * xs.w;
  Tensor<T> out(xs);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T g = gamma.data()[c], b = beta.data()[c];
      const T* px = x.data() + (std::size_t(n) * C + c) * plane;
      T* py = out.mutable_data() + (std::size_t(n) * C + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) py[i] = px[i] * g + b;
    }
  check_finite(ctx, out, "channel_affine");

  if (ctx.recording() &&
      (x.requires_grad() || gamma.requires_grad() || beta.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<T> tx = x, tg = gamma, tb = beta, ty = out;
    ctx.tape->record(
        [tx, tg, tb, ty, N, C, plane]() {
          const T* dy = ty.grad().data();
          auto xs_ = tx.storage();
          auto gs_ = tg.storage();
          auto bs_ = tb.storage();
          for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
              const std::size_t off = (std::size_t(n) * C + c) * plane;
              if (xs_->requires_grad) {
                const T g = tg.data()[c];
                T* dx = xs_->grad.data() + off;
                for (std::size_t i = 0; i < plane; ++i) dx[i] += dy[off + i] * g;
              }
              if (gs_->requires_grad) {
                T acc = 0;
                const T* px = tx.data() + off;
                for (std::size_t i = 0; i < plane; ++i) acc += dy[off + i] * px[i];
                gs_->grad[c] += acc;
              }
              if (bs_->requires_grad) {
                T acc = 0;
                for (std::size_t i = 0; i < plane; ++i) acc += dy[off + i];
                bs_->grad[c] += acc;
              }
            }
        },
        {x, gamma, beta, out});
  }
  return out;
}

// --------------------------------------------------- reductions and loss ---

template <typename T>
Tensor<T> sum_all(Context<T>& ctx, const Tensor<T>& x) {
  T s = 0;
  for (const T& v : x.vec()) s += v;
  Tensor<T> out = Tensor<T>::scalar(s);
  check_finite(ctx, out, "sum_all");
  if (ctx.recording() && x.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<T> tx = x, ty = out;
    ctx.tape->record(
        [tx, ty]() {
          const T g = ty.grad()[0];
          T* dx = tx.storage()->grad.data();
          const std::size_t n = tx.vec().size();
          for (std::size_t i = 0; i < n; ++i) dx[i] += g;
        },
        {x, out});
  }
  return out;
}

template <typename T>
Tensor<T> scale(Context<T>& ctx, const Tensor<T>& x, T alpha) {
  Tensor<T> out(x.shape());
  const std::size_t n = x.vec().size();
  for (std::size_t i = 0; i < n; ++i) out.mutable_data()[i] = x.data()[i] * alpha;
  check_finite(ctx, out, "scale");
  if (ctx.recording() && x.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<T> tx = x, ty = out;
    ctx.tape->record(
        [tx, ty, alpha]() {
          const T* dy = ty.grad().data();
          T* dx = tx.storage()->grad.data();
          const std::size_t n = tx.vec().size();
          for (std::size_t i = 0; i < n; ++i) dx[i] += alpha * dy[i];
        },
        {x, out});
  }
  return out;
}

template <typename T>
Tensor<T> nll_loss(Context<T>& ctx, const Tensor<T>& probs,
                   const std::vector<std::uint8_t>& labels) {
  const Shape& s = probs.shape();
  require(s.n == 1, "nll_loss: batch dimension must be 1");
  const int C = s.c, H = s.h, W = s.w;
  require(std::int64_t(labels.size()) == std::int64_t(H) * W,
          "nll_loss: label map size mismatch");
  const std::size_t plane = std::size_t(H) * W;
  const T tiny = std::is_same_v<T, float> ? T(1e-30) : T(1e-290);
  double acc = 0.0;
  for (std::size_t p = 0; p < plane; ++p) {
    const int l = labels[p];
    require(l < C, "nll_loss: label value out of range");
    acc += -std::log(double(std::max(probs.data()[std::size_t(l) * plane + p], tiny)));
  }
  Tensor<T> out = Tensor<T>::scalar(T(acc / double(plane)));
  check_finite(ctx, out, "nll_loss");
  if (ctx.recording() && probs.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<T> tp = probs, ty = out;
    std::vector<std::uint8_t> ls = labels;
    ctx.tape->record(
        [tp, ty, ls, plane, tiny]() {
          const T g = ty.grad()[0];
          T* dp = tp.storage()->grad.data();
          const T* p = tp.data();
          for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t idx = std::size_t(ls[i]) * plane + i;
            dp[idx] -= g / (T(plane) * std::max(p[idx], tiny));
          }
        },
        {probs, out});
  }
  return out;
}

// ------------------------------------------------------- instantiations ---

#define VSEG_INSTANTIATE_OPS(T)                                                          \
  template void gemm_nn<T>(int, int, int, const T*, const T*, T*);                       \
  template void gemm_tn<T>(int, int, int, const T*, const T*, T*);                       \
  template void gemm_nt<T>(int, int, int, const T*, const T*, T*);                       \
  template Tensor<T> conv2d<T>(Context<T>&, const Tensor<T>&, const Tensor<T>&,          \
                               const Tensor<T>&);                                        \
  template Tensor<T> depthwise_conv2d<T>(Context<T>&, const Tensor<T>&,                  \
                                         const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> pointwise_conv2d<T>(Context<T>&, const Tensor<T>&,                  \
                                         const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> elementwise<T>(Context<T>&, Ew, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> concat_channels<T>(Context<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> resize_bilinear<T>(Context<T>&, const Tensor<T>&, double);          \
  template Tensor<T> softmax_channels<T>(Context<T>&, const Tensor<T>&);                 \
  template Tensor<T> channel_mul<T>(Context<T>&, const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> channel_affine<T>(Context<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                       const Tensor<T>&);                                \
  template Tensor<T> sum_all<T>(Context<T>&, const Tensor<T>&);                          \
  template Tensor<T> scale<T>(Context<T>&, const Tensor<T>&, T);                         \
  template Tensor<T> nll_loss<T>(Context<T>&, const Tensor<T>&,                          \
                                 const std::vector<std::uint8_t>&);

VSEG_INSTANTIATE_OPS(float)
VSEG_INSTANTIATE_OPS(double)

}  // namespace vseg
