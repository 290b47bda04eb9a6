#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vseg/tensor.hpp"

namespace vseg {

enum class UnitDesign { Standard, Fast, Faster };

const char* unit_design_name(UnitDesign d);
UnitDesign unit_design_from_name(const std::string& s);

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

// Hidden map h and cell memory map c carried across video frames.
// Zero-initialized at sequence start; h and c always share one shape.
template <typename T>
struct CellState {
  Tensor<T> h, c;
};

// Peephole convLSTM parameters. Gate convolutions on the cell input are
// wx*; gate convolutions on the recurrent input are wh*; peepholes are
// per-channel weights on the memory map.
template <typename T>
struct ConvLstmParams {
  Tensor<T> wxi, wxf, wxc, wxo;
  Tensor<T> whi, whf, whc, who;
  Tensor<T> wci, wcf, wco;
  Tensor<T> bi, bf, bc, bo;
  bool depthwise = false;
  int input = 0;      // channels of the cell input x
  int recurrent = 0;  // channels of the recurrent input fed to wh*
  int hidden = 0;     // channels of h and c

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out);
};

// depthwise=false: full KxK gate convolutions (input -> hidden, recurrent -> hidden).
// depthwise=true: per-channel gate convolutions; requires input == recurrent == hidden.
template <typename T>
ConvLstmParams<T> make_convlstm_params(int input, int recurrent, int hidden, int kh,
                                       int kw, bool depthwise, Rng& rng);

template <typename T>
ConvLstmParams<T> zero_convlstm_params(int input, int recurrent, int hidden, int kh,
                                       int kw, bool depthwise);

template <typename T>
CellState<T> zero_cell_state(int channels, int h, int w);

// One peephole convLSTM step:
//   i = sig(Wxi*x + Whi*h + Wci.c + bi)
//   f = sig(Wxf*x + Whf*h + Wcf.c + bf)
//   c' = f.c + i.tanh(Wxc*x + Whc*h + bc)
//   o = sig(Wxo*x + Who*h + Wco.c' + bo)
//   h' = o.tanh(c')
template <typename T>
std::pair<Tensor<T>, CellState<T>> convlstm_step(Context<T>& ctx, const Tensor<T>& x,
                                                 const CellState<T>& state,
                                                 const ConvLstmParams<T>& params);

// Same gate equations with every gate convolution depthwise (no cross-channel
// mixing inside the cell); input channels must equal hidden channels.
template <typename T>
std::pair<Tensor<T>, CellState<T>> sep_convlstm_step(Context<T>& ctx, const Tensor<T>& x,
                                                     const CellState<T>& state,
                                                     const ConvLstmParams<T>& params);

// generalized step used by the recurrent units: the recurrent input r fed to
// the wh* convolutions may be wider than h (the Fast unit feeds back its
// previous full output)
template <typename T>
std::pair<Tensor<T>, CellState<T>> convlstm_step_r(Context<T>& ctx, const Tensor<T>& x,
                                                   const Tensor<T>& r, const Tensor<T>& c,
                                                   const ConvLstmParams<T>& params);

struct RecurrentUnitSpec {
  UnitDesign design = UnitDesign::Standard;
  int in_channels = 0;
  int out_channels = 0;  // must equal in_channels
  int kh = 3, kw = 3;

  void validate() const;
};

// Unit-level recurrent state. `feedback` is the previous unit output and is
// used only by the Fast design, whose gate convolutions read the full
// I-channel output of the previous step.
template <typename T>
struct UnitState {
  CellState<T> cell;
  Tensor<T> feedback;
};

// The three insertable recurrent-unit designs:
//   Standard: plain convLSTM, hidden size I, output = h.
//   Fast:     convLSTM with I/2-channel cell state fed by x and the previous
//             unit output, concatenated with a parallel 1x1 conv I -> I/2.
//   Faster:   1x1 reduction I -> I/2, depthwise-separable convLSTM over the
//             reduced features, concatenated with a parallel 1x1 conv I -> I/2.
// Output channel count always equals I; concatenation places the recurrent
// branch first.
template <typename T>
class RecurrentUnit {
 public:
  RecurrentUnit() = default;
  RecurrentUnit(const RecurrentUnitSpec& spec, Rng& rng);

  const RecurrentUnitSpec& spec() const { return spec_; }

  UnitState<T> initial_state(int h, int w) const;

  std::pair<Tensor<T>, UnitState<T>> forward(Context<T>& ctx, const Tensor<T>& x,
                                             const UnitState<T>& state) const;

  void collect_params(const std::string& prefix, std::vector<NamedParam<T>>& out);

  std::int64_t param_count() const;

  const ConvLstmParams<T>& cell() const { return cell_; }
  ConvLstmParams<T>& mutable_cell() { return cell_; }

 private:
  RecurrentUnitSpec spec_;
  ConvLstmParams<T> cell_;
  Tensor<T> pw_w_, pw_b_;    // parallel 1x1 branch (Fast/Faster)
  Tensor<T> red_w_, red_b_;  // reduction before the depthwise cell (Faster)
};

}  // namespace vseg
