#pragma once

#include <array>
#include <string>
#include <vector>

#include "vseg/recurrent.hpp"

namespace vseg {

enum class NetVersion { Base, V2, V5, V6 };

const char* net_version_name(NetVersion v);
NetVersion net_version_from_name(const std::string& s);

// Recurrent-unit placements: V2 inserts one unit directly before the softmax
// layer, V5 one at the end of each resolution branch, V6 both.
int unit_count(NetVersion v);

struct NetworkConfig {
  int num_classes = 8;
  int base_channels = 16;                    // branch widths: base, 2*base, 4*base
  std::array<int, 3> branch_depths = {2, 2, 3};
  int height = 64;
  int width = 128;
  NetVersion version = NetVersion::Base;
  UnitDesign unit_design = UnitDesign::Standard;
  int kernel = 3;

  void validate() const;
  int branch_width(int i) const { return base_channels << i; }
};

// One cell state per placed recurrent unit, in fixed placement order
// (branch1, branch2, branch3, head). Reset to zeros at sequence boundaries.
template <typename T>
struct NetworkState {
  std::array<UnitState<T>, 4> units;
};

template <typename T>
struct ConvBlock {
  Tensor<T> w, b, gamma, beta;
};

// Scaled-down three-branch ICNet-style network: conv+ReLU stacks at full,
// 1/2 and 1/4 input resolution (deepest stack on the lowest resolution), two
// cascade fusions (upsample x2 the coarser features, 1x1-project both inputs
// to a common width, sum, ReLU) and a 1x1 classifier head with per-pixel
// softmax.
template <typename T>
class Network {
 public:
  Network() = default;
  Network(const NetworkConfig& cfg, std::uint64_t init_seed);

  const NetworkConfig& config() const { return cfg_; }

  NetworkState<T> initial_state() const;

  // One frame: per-pixel class probabilities plus advanced state.
  std::pair<Tensor<T>, NetworkState<T>> forward_frame(Context<T>& ctx, const Tensor<T>& x,
                                                      const NetworkState<T>& state) const;

  // Threads state through all frames, returns final-frame probabilities.
  std::pair<Tensor<T>, NetworkState<T>> forward_sequence(
      Context<T>& ctx, const std::vector<Tensor<T>>& frames) const;

  // Per-frame probabilities for the whole sequence (evaluation, flicker).
  std::vector<Tensor<T>> forward_sequence_all(Context<T>& ctx,
                                              const std::vector<Tensor<T>>& frames) const;

  std::vector<NamedParam<T>>& params() { return params_; }
  const std::vector<NamedParam<T>>& params() const { return params_; }

  std::int64_t param_count() const;
  std::int64_t recurrent_param_count() const;
  int placed_units() const;

 private:
  Tensor<T> run_branch(Context<T>& ctx, int idx, const Tensor<T>& x) const;

  NetworkConfig cfg_;
  std::array<std::vector<ConvBlock<T>>, 3> branches_;
  Tensor<T> cff1_low_w_, cff1_low_b_, cff1_high_w_, cff1_high_b_;
  Tensor<T> cff2_low_w_, cff2_low_b_, cff2_high_w_, cff2_high_b_;
  Tensor<T> head_w_, head_b_;
  std::array<RecurrentUnit<T>, 4> units_;  // b1, b2, b3, head
  std::array<bool, 4> has_unit_ = {false, false, false, false};
  std::vector<NamedParam<T>> params_;
};

}  // namespace vseg
