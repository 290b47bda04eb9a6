#include "vseg/recurrent.hpp"

#include <cmath>

namespace vseg {

const char* unit_design_name(UnitDesign d) {
  switch (d) {
    case UnitDesign::Standard: return "standard";
    case UnitDesign::Fast: return "fast";
    case UnitDesign::Faster: return "faster";
  }
  return "?";
}

UnitDesign unit_design_from_name(const std::string& s) {
  if (s == "standard") return UnitDesign::Standard;
  if (s == "fast") return UnitDesign::Fast;
  if (s == "faster") return UnitDesign::Faster;
  fail("unknown unit design '" + s + "' (expected standard|fast|faster)");
}

void RecurrentUnitSpec::validate() const {
  require(in_channels > 0, "RecurrentUnitSpec: in_channels must be positive");
  require(out_channels == in_channels,
          "RecurrentUnitSpec: out_channels must equal in_channels");
  require(kh % 2 == 1 && kw % 2 == 1, "RecurrentUnitSpec: kernel extents must be odd");
  if (design != UnitDesign::Standard)
    require(in_channels % 2 == 0,
            "RecurrentUnitSpec: Fast/Faster designs need an even channel count");
}

namespace {

template <typename T>
Tensor<T> uniform_tensor(Shape s, double bound, Rng& rng) {
  Tensor<T> t(s);
  for (auto& v : t.mutable_vec()) v = T(rng.uniform(-bound, bound));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> const_tensor(Shape s, T value) {
  Tensor<T> t(s, value);
  t.set_requires_grad(true);
  return t;
}

}  // namespace

template <typename T>
void ConvLstmParams<T>::collect(const std::string& p, std::vector<NamedParam<T>>& out) {
  out.push_back({p + ".wxi", wxi});
  out.push_back({p + ".wxf", wxf});
  out.push_back({p + ".wxc", wxc});
  out.push_back({p + ".wxo", wxo});
  out.push_back({p + ".whi", whi});
  out.push_back({p + ".whf", whf});
  out.push_back({p + ".whc", whc});
  out.push_back({p + ".who", who});
  out.push_back({p + ".wci", wci});
  out.push_back({p + ".wcf", wcf});
  out.push_back({p + ".wco", wco});
  out.push_back({p + ".bi", bi});
  out.push_back({p + ".bf", bf});
  out.push_back({p + ".bc", bc});
  out.push_back({p + ".bo", bo});
}

template <typename T>
ConvLstmParams<T> make_convlstm_params(int input, int recurrent, int hidden, int kh,
                                       int kw, bool depthwise, Rng& rng) {
  require(input > 0 && recurrent > 0 && hidden > 0, "convlstm params: bad channel counts");
  if (depthwise)
    require(input == hidden && recurrent == hidden,
            "depthwise convLSTM requires input == recurrent == hidden channels");
  ConvLstmParams<T> p;
  p.depthwise = depthwise;
  p.input = input;
  p.recurrent = recurrent;
  p.hidden = hidden;
  const Shape xw = depthwise ? Shape(hidden, 1, kh, kw) : Shape(hidden, input, kh, kw);
  const Shape hw = depthwise ? Shape(hidden, 1, kh, kw) : Shape(hidden, recurrent, kh, kw);
  const double xb = 1.0 / std::sqrt(double(depthwise ? 1 : input) * kh * kw);
  const double hb = 1.0 / std::sqrt(double(depthwise ? 1 : recurrent) * kh * kw);
  p.wxi = uniform_tensor<T>(xw, xb, rng);
  p.wxf = uniform_tensor<T>(xw, xb, rng);
  p.wxc = uniform_tensor<T>(xw, xb, rng);
  p.wxo = uniform_tensor<T>(xw, xb, rng);
  p.whi = uniform_tensor<T>(hw, hb, rng);
  p.whf = uniform_tensor<T>(hw, hb, rng);
  p.whc = uniform_tensor<T>(hw, hb, rng);
  p.who = uniform_tensor<T>(hw, hb, rng);
  const Shape cs(1, hidden, 1, 1);
  p.wci = uniform_tensor<T>(cs, hb, rng);
  p.wcf = uniform_tensor<T>(cs, hb, rng);
  p.wco = uniform_tensor<T>(cs, hb, rng);
  // forget gate starts open (standard LSTM practice)
  p.bi = const_tensor<T>(cs, T(0));
  p.bf = const_tensor<T>(cs, T(1));
  p.bc = const_tensor<T>(cs, T(0));
  p.bo = const_tensor<T>(cs, T(0));
  return p;
}

template <typename T>
ConvLstmParams<T> zero_convlstm_params(int input, int recurrent, int hidden, int kh,
                                       int kw, bool depthwise) {
  Rng rng(0);
  ConvLstmParams<T> p = make_convlstm_params<T>(input, recurrent, hidden, kh, kw,
                                                depthwise, rng);
  std::vector<NamedParam<T>> all;
  p.collect("", all);
  for (auto& np : all)
    std::fill(np.tensor.mutable_vec().begin(), np.tensor.mutable_vec().end(), T(0));
  return p;
}

template <typename T>
CellState<T> zero_cell_state(int channels, int h, int w) {
  return {Tensor<T>(Shape(channels, h, w)), Tensor<T>(Shape(channels, h, w))};
}

template <typename T>
std::pair<Tensor<T>, CellState<T>> convlstm_step_r(Context<T>& ctx, const Tensor<T>& x,
                                                   const Tensor<T>& r, const Tensor<T>& c,
                                                   const ConvLstmParams<T>& p) {
  require(x.shape().c == p.input, "convlstm step: input channel count (" +
                                      std::to_string(x.shape().c) +
                                      ") != params input (" + std::to_string(p.input) + ")");
  require(r.shape().c == p.recurrent, "convlstm step: recurrent channel mismatch");
  require(c.shape().c == p.hidden, "convlstm step: state channel count != hidden size");
  require(x.shape().same_spatial(r.shape()) && x.shape().same_spatial(c.shape()),
          "convlstm step: spatial extents of input and state must match");

  const Tensor<T> none;
  auto cv = [&](const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& b) {
    return p.depthwise ? depthwise_conv2d(ctx, in, w, b) : conv2d(ctx, in, w, b);
  };

  Tensor<T> i = sigmoid(ctx, add(ctx, add(ctx, cv(x, p.wxi, p.bi), cv(r, p.whi, none)),
                                 channel_mul(ctx, c, p.wci)));
  Tensor<T> f = sigmoid(ctx, add(ctx, add(ctx, cv(x, p.wxf, p.bf), cv(r, p.whf, none)),
                                 channel_mul(ctx, c, p.wcf)));
  Tensor<T> g = tanh_op(ctx, add(ctx, cv(x, p.wxc, p.bc), cv(r, p.whc, none)));
  Tensor<T> c2 = add(ctx, mul(ctx, f, c), mul(ctx, i, g));
  Tensor<T> o = sigmoid(ctx, add(ctx, add(ctx, cv(x, p.wxo, p.bo), cv(r, p.who, none)),
                                 channel_mul(ctx, c2, p.wco)));
  Tensor<T> h2 = mul(ctx, o, tanh_op(ctx, c2));
  return {h2, CellState<T>{h2, c2}};
}

template <typename T>
std::pair<Tensor<T>, CellState<T>> convlstm_step(Context<T>& ctx, const Tensor<T>& x,
                                                 const CellState<T>& state,
                                                 const ConvLstmParams<T>& p) {
  require(!p.depthwise, "convlstm_step: params are depthwise; use sep_convlstm_step");
  require(state.h.shape() == state.c.shape(), "convlstm_step: h/c shape mismatch");
  return convlstm_step_r(ctx, x, state.h, state.c, p);
}

template <typename T>
std::pair<Tensor<T>, CellState<T>> sep_convlstm_step(Context<T>& ctx, const Tensor<T>& x,
                                                     const CellState<T>& state,
                                                     const ConvLstmParams<T>& p) {
  require(p.depthwise, "sep_convlstm_step: params are not depthwise");
  require(x.shape().c == p.hidden,
          "sep_convlstm_step: input channels must equal hidden channels");
  require(state.h.shape() == state.c.shape(), "sep_convlstm_step: h/c shape mismatch");
  return convlstm_step_r(ctx, x, state.h, state.c, p);
}

template <typename T>
RecurrentUnit<T>::RecurrentUnit(const RecurrentUnitSpec& spec, Rng& rng) : spec_(spec) {
  spec.validate();
  const int I = spec.in_channels;
  const int half = I / 2;
  switch (spec.design) {
    case UnitDesign::Standard:
      cell_ = make_convlstm_params<T>(I, I, I, spec.kh, spec.kw, false, rng);
      break;
    case UnitDesign::Fast:
      // gate convolutions read x and the previous full unit output
      cell_ = make_convlstm_params<T>(I, I, half, spec.kh, spec.kw, false, rng);
      break;
    case UnitDesign::Faster:
      cell_ = make_convlstm_params<T>(half, half, half, spec.kh, spec.kw, true, rng);
      red_w_ = uniform_tensor<T>(Shape(half, I, 1, 1), 1.0 / std::sqrt(double(I)), rng);
      red_b_ = const_tensor<T>(Shape(1, half, 1, 1), T(0));
      break;
  }
  if (spec.design != UnitDesign::Standard) {
    const int half_ = I / 2;
    pw_w_ = uniform_tensor<T>(Shape(half_, I, 1, 1), 1.0 / std::sqrt(double(I)), rng);
    pw_b_ = const_tensor<T>(Shape(1, half_, 1, 1), T(0));
  }
}

template <typename T>
UnitState<T> RecurrentUnit<T>::initial_state(int h, int w) const {
  UnitState<T> s;
  s.cell = zero_cell_state<T>(cell_.hidden, h, w);
  if (spec_.design == UnitDesign::Fast)
    s.feedback = Tensor<T>(Shape(spec_.in_channels, h, w));
  return s;
}

template <typename T>
std::pair<Tensor<T>, UnitState<T>> RecurrentUnit<T>::forward(
    Context<T>& ctx, const Tensor<T>& x, const UnitState<T>& state) const {
  require(x.shape().c == spec_.in_channels,
          "recurrent unit: input has " + std::to_string(x.shape().c) +
              " channels, spec expects " + std::to_string(spec_.in_channels));
  require(state.cell.h.defined() && state.cell.h.shape().c == cell_.hidden,
          "recurrent unit: state does not match this unit design");

  UnitState<T> next;
  Tensor<T> y;
  switch (spec_.design) {
    case UnitDesign::Standard: {
      auto [h2, cs] = convlstm_step(ctx, x, state.cell, cell_);
      y = h2;
      next.cell = cs;
      break;
    }
    case UnitDesign::Fast: {
      require(state.feedback.defined(), "fast unit: state is missing the feedback map");
      auto [h2, cs] = convlstm_step_r(ctx, x, state.feedback, state.cell.c, cell_);
      Tensor<T> pw = pointwise_conv2d(ctx, x, pw_w_, pw_b_);
      y = concat_channels(ctx, h2, pw);
      next.cell = cs;
      next.feedback = y;
      break;
    }
    case UnitDesign::Faster: {
      Tensor<T> xr = pointwise_conv2d(ctx, x, red_w_, red_b_);
      auto [h2, cs] = sep_convlstm_step(ctx, xr, state.cell, cell_);
      Tensor<T> pw = pointwise_conv2d(ctx, x, pw_w_, pw_b_);
      y = concat_channels(ctx, h2, pw);
      next.cell = cs;
      break;
    }
  }
  return {y, next};
}

template <typename T>
void RecurrentUnit<T>::collect_params(const std::string& prefix,
                                      std::vector<NamedParam<T>>& out) {
  cell_.collect(prefix + ".cell", out);
  if (pw_w_.defined()) {
    out.push_back({prefix + ".pw.w", pw_w_});
    out.push_back({prefix + ".pw.b", pw_b_});
  }
  if (red_w_.defined()) {
    out.push_back({prefix + ".red.w", red_w_});
    out.push_back({prefix + ".red.b", red_b_});
  }
}

template <typename T>
std::int64_t RecurrentUnit<T>::param_count() const {
  std::vector<NamedParam<T>> all;
  const_cast<RecurrentUnit<T>*>(this)->collect_params("u", all);
  std::int64_t n = 0;
  for (const auto& p : all) n += p.tensor.numel();
  return n;
}

#define VSEG_INSTANTIATE_RECURRENT(T)                                                   \
  template struct ConvLstmParams<T>;                                                    \
  template ConvLstmParams<T> make_convlstm_params<T>(int, int, int, int, int, bool,    \
                                                     Rng&);                             \
  template ConvLstmParams<T> zero_convlstm_params<T>(int, int, int, int, int, bool);   \
  template CellState<T> zero_cell_state<T>(int, int, int);                              \
  template std::pair<Tensor<T>, CellState<T>> convlstm_step_r<T>(                       \
      Context<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,               \
      const ConvLstmParams<T>&);                                                        \
  template std::pair<Tensor<T>, CellState<T>> convlstm_step<T>(                         \
      Context<T>&, const Tensor<T>&, const CellState<T>&, const ConvLstmParams<T>&);   \
  template std::pair<Tensor<T>, CellState<T>> sep_convlstm_step<T>(                     \
      Context<T>&, const Tensor<T>&, const CellState<T>&, const ConvLstmParams<T>&);   \
  template class RecurrentUnit<T>;

VSEG_INSTANTIATE_RECURRENT(float)
VSEG_INSTANTIATE_RECURRENT(double)

}  // namespace vseg
