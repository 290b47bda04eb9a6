#pragma once

// Independent reference implementations used as test oracles. These stay
// deliberately naive (direct summation, explicit bounds checks) and must not
// share code with the library's im2col/GEMM path.

#include <cmath>
#include <functional>
#include <vector>

#include "vseg/recurrent.hpp"
#include "vseg/tensor.hpp"

namespace vseg::testing {

template <typename T>
Tensor<T> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(s);
  for (auto& v : t.mutable_vec()) v = T(rng.uniform(lo, hi));
  return t;
}

// direct-summation convolution with same zero padding
template <typename T>
Tensor<T> naive_conv2d(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& b) {
  const Shape& xs = x.shape();
  const Shape& ks = k.shape();
  const int N = xs.n, I = xs.c, H = xs.h, W = xs.w;
  const int O = ks.n, KH = ks.h, KW = ks.w;
  const int ph = KH / 2, pw = KW / 2;
  Tensor<T> y(Shape(N, O, H, W));
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o)
      for (int yy = 0; yy < H; ++yy)
        for (int xx = 0; xx < W; ++xx) {
          T acc = b.defined() ? b.data()[o] : T(0);
          for (int i = 0; i < I; ++i)
            for (int ky = 0; ky < KH; ++ky)
              for (int kx = 0; kx < KW; ++kx) {
                const int sy = yy + ky - ph, sx = xx + kx - pw;
                if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                acc += x.at(n, i, sy, sx) * k.at(o, i, ky, kx);
              }
          y.at_mut(n, o, yy, xx) = acc;
        }
  return y;
}

// per-channel direct summation
template <typename T>
Tensor<T> naive_depthwise(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& b) {
  const Shape& xs = x.shape();
  const int N = xs.n, C = xs.c, H = xs.h, W = xs.w;
  const int KH = k.shape().h, KW = k.shape().w;
  const int ph = KH / 2, pw = KW / 2;
  Tensor<T> y(Shape(N, C, H, W));
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int yy = 0; yy < H; ++yy)
        for (int xx = 0; xx < W; ++xx) {
          T acc = b.defined() ? b.data()[c] : T(0);
          for (int ky = 0; ky < KH; ++ky)
            for (int kx = 0; kx < KW; ++kx) {
              const int sy = yy + ky - ph, sx = xx + kx - pw;
              if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
              acc += x.at(n, c, sy, sx) * k.at(c, 0, ky, kx);
            }
          y.at_mut(n, c, yy, xx) = acc;
        }
  return y;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.vec().size(); ++i)
    m = std::max(m, std::abs(double(a.data()[i]) - double(b.data()[i])));
  return m;
}

// Central finite differences against tape gradients. loss_fn must rebuild the
// graph from the current parameter values. Checks up to max_coords
// evenly-strided coordinates per tensor (all when max_coords <= 0). Returns
// the max relative error with denominator max(|g|, |fd|, 1e-6).
inline double gradcheck(std::vector<Tensor<double>> params,
                        const std::function<Tensor<double>(Context<double>&)>& loss_fn,
                        double eps = 1e-5, int max_coords = -1) {
  Tape<double> tape;
  Context<double> ctx;
  ctx.tape = &tape;
  for (auto& p : params) p.set_requires_grad(true);
  Tensor<double> loss = loss_fn(ctx);
  tape.backward(loss);
  std::vector<std::vector<double>> grads;
  for (const auto& p : params)
    grads.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.vec().size(), 0.0));

  Context<double> eval;
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& vec = params[pi].mutable_vec();
    const std::size_t n = vec.size();
    std::size_t stride = 1;
    if (max_coords > 0 && n > std::size_t(max_coords)) stride = n / std::size_t(max_coords);
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = vec[i];
      vec[i] = orig + eps;
      const double up = loss_fn(eval).item();
      vec[i] = orig - eps;
      const double dn = loss_fn(eval).item();
      vec[i] = orig;
      const double fd = (up - dn) / (2.0 * eps);
      const double g = grads[pi][i];
      const double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

// Scalar peephole LSTM oracle: a convLSTM step at 1x1 spatial size reduces to
// dense products with the kernels' center taps.
struct ScalarLstmOracle {
  // weights[out][in] built from kernel center taps
  static std::vector<std::vector<double>> center_matrix(const Tensor<double>& k) {
    const Shape& s = k.shape();
    std::vector<std::vector<double>> m(std::size_t(s.n),
                                       std::vector<double>(std::size_t(s.c), 0.0));
    for (int o = 0; o < s.n; ++o)
      for (int i = 0; i < s.c; ++i) m[std::size_t(o)][std::size_t(i)] = k.at(o, i, s.h / 2, s.w / 2);
    return m;
  }

  static std::vector<double> matvec(const std::vector<std::vector<double>>& m,
                                    const std::vector<double>& v) {
    std::vector<double> out(m.size(), 0.0);
    for (std::size_t o = 0; o < m.size(); ++o)
      for (std::size_t i = 0; i < v.size(); ++i) out[o] += m[o][i] * v[i];
    return out;
  }

  // one step; x has I entries, h/c have C entries
  static void step(const ConvLstmParams<double>& p, const std::vector<double>& x,
                   std::vector<double>& h, std::vector<double>& c) {
    const auto wxi = center_matrix(p.wxi), wxf = center_matrix(p.wxf),
               wxc = center_matrix(p.wxc), wxo = center_matrix(p.wxo);
    const auto whi = center_matrix(p.whi), whf = center_matrix(p.whf),
               whc = center_matrix(p.whc), who = center_matrix(p.who);
    const std::size_t C = c.size();
    const auto xi = matvec(wxi, x), xf = matvec(wxf, x), xc = matvec(wxc, x),
               xo = matvec(wxo, x);
    const auto hi = matvec(whi, h), hf = matvec(whf, h), hc = matvec(whc, h),
               ho = matvec(who, h);
    std::vector<double> c2(C), h2(C);
    for (std::size_t j = 0; j < C; ++j) {
      const double i_g =
          1.0 / (1.0 + std::exp(-(xi[j] + hi[j] + p.wci.data()[j] * c[j] + p.bi.data()[j])));
      const double f_g =
          1.0 / (1.0 + std::exp(-(xf[j] + hf[j] + p.wcf.data()[j] * c[j] + p.bf.data()[j])));
      const double g = std::tanh(xc[j] + hc[j] + p.bc.data()[j]);
      c2[j] = f_g * c[j] + i_g * g;
      const double o_g =
          1.0 / (1.0 + std::exp(-(xo[j] + ho[j] + p.wco.data()[j] * c2[j] + p.bo.data()[j])));
      h2[j] = o_g * std::tanh(c2[j]);
    }
    h = h2;
    c = c2;
  }
};

}  // namespace vseg::testing
