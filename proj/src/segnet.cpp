#include "vseg/segnet.hpp"

#include <cmath>

namespace vseg {

const char* net_version_name(NetVersion v) {
  switch (v) {
    case NetVersion::Base: return "base";
    case NetVersion::V2: return "v2";
    case NetVersion::V5: return "v5";
    case NetVersion::V6: return "v6";
  }
  return "?";
}

NetVersion net_version_from_name(const std::string& s) {
  if (s == "base") return NetVersion::Base;
  if (s == "v2") return NetVersion::V2;
  if (s == "v5") return NetVersion::V5;
  if (s == "v6") return NetVersion::V6;
  fail("unknown network version '" + s + "' (expected base|v2|v5|v6)");
}

int unit_count(NetVersion v) {
  switch (v) {
    case NetVersion::Base: return 0;
    case NetVersion::V2: return 1;
    case NetVersion::V5: return 3;
    case NetVersion::V6: return 4;
  }
  return 0;
}

void NetworkConfig::validate() const {
  require(num_classes >= 2, "network config: need at least 2 classes");
  require(base_channels >= 2, "network config: base_channels must be >= 2");
  require(height % 4 == 0 && width % 4 == 0,
          "network config: input extents must be divisible by 4");
  require(height >= 8 && width >= 8, "network config: input extents too small");
  require(kernel % 2 == 1, "network config: kernel extent must be odd");
  for (int d : branch_depths) require(d >= 1, "network config: branch depths must be >= 1");
  if (unit_design != UnitDesign::Standard && version != NetVersion::Base) {
    const bool head_unit = version == NetVersion::V2 || version == NetVersion::V6;
    if (head_unit)
      require(num_classes % 2 == 0,
              "network config: Fast/Faster head unit needs an even class count");
    require(base_channels % 2 == 0,
            "network config: Fast/Faster branch units need even widths");
  }
}

namespace {

template <typename T>
Tensor<T> uniform_param(Shape s, double bound, Rng& rng) {
  Tensor<T> t(s);
  for (auto& v : t.mutable_vec()) v = T(rng.uniform(-bound, bound));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> const_param(Shape s, T value) {
  Tensor<T> t(s, value);
  t.set_requires_grad(true);
  return t;
}

template <typename T>
ConvBlock<T> make_block(int in, int out, int k, Rng& rng) {
  ConvBlock<T> b;
  b.w = uniform_param<T>(Shape(out, in, k, k), 1.0 / std::sqrt(double(in) * k * k), rng);
  b.b = const_param<T>(Shape(1, out, 1, 1), T(0));
  b.gamma = const_param<T>(Shape(1, out, 1, 1), T(1));
  b.beta = const_param<T>(Shape(1, out, 1, 1), T(0));
  return b;
}

template <typename T>
void make_pointwise(int in, int out, Rng& rng, Tensor<T>& w, Tensor<T>& b) {
  w = uniform_param<T>(Shape(out, in, 1, 1), 1.0 / std::sqrt(double(in)), rng);
  b = const_param<T>(Shape(1, out, 1, 1), T(0));
}

}  // namespace

template <typename T>
Network<T>::Network(const NetworkConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg.validate();
  Rng rng(init_seed);
  Rng backbone_rng = rng.fork(1);
  Rng unit_rng = rng.fork(2);

  for (int i = 0; i < 3; ++i) {
    int in = 3;
    const int w = cfg.branch_width(i);
    for (int d = 0; d < cfg.branch_depths[std::size_t(i)]; ++d) {
      branches_[std::size_t(i)].push_back(make_block<T>(in, w, cfg.kernel, backbone_rng));
      in = w;
    }
  }
  const int w1 = cfg.branch_width(0), w2 = cfg.branch_width(1), w3 = cfg.branch_width(2);
  make_pointwise<T>(w3, w2, backbone_rng, cff1_low_w_, cff1_low_b_);
  make_pointwise<T>(w2, w2, backbone_rng, cff1_high_w_, cff1_high_b_);
  make_pointwise<T>(w2, w1, backbone_rng, cff2_low_w_, cff2_low_b_);
  make_pointwise<T>(w1, w1, backbone_rng, cff2_high_w_, cff2_high_b_);
  make_pointwise<T>(w1, cfg.num_classes, backbone_rng, head_w_, head_b_);

  const bool branch_units = cfg.version == NetVersion::V5 || cfg.version == NetVersion::V6;
  const bool head_unit = cfg.version == NetVersion::V2 || cfg.version == NetVersion::V6;
  if (branch_units) {
    for (int i = 0; i < 3; ++i) {
      RecurrentUnitSpec s{cfg.unit_design, cfg.branch_width(i), cfg.branch_width(i),
                          cfg.kernel, cfg.kernel};
      units_[std::size_t(i)] = RecurrentUnit<T>(s, unit_rng);
      has_unit_[std::size_t(i)] = true;
    }
  }
  if (head_unit) {
    RecurrentUnitSpec s{cfg.unit_design, cfg.num_classes, cfg.num_classes, cfg.kernel,
                        cfg.kernel};
    units_[3] = RecurrentUnit<T>(s, unit_rng);
    has_unit_[3] = true;
  }

  // stable names; backbone names are shared across versions so a Base
  // checkpoint can warm-start any version
  for (int i = 0; i < 3; ++i) {
    auto& blocks = branches_[std::size_t(i)];
    for (std::size_t d = 0; d < blocks.size(); ++d) {
      const std::string p = "branch" + std::to_string(i + 1) + ".conv" + std::to_string(d);
      params_.push_back({p + ".w", blocks[d].w});
      params_.push_back({p + ".b", blocks[d].b});
      params_.push_back({p + ".gamma", blocks[d].gamma});
      params_.push_back({p + ".beta", blocks[d].beta});
    }
  }
  params_.push_back({"cff1.low.w", cff1_low_w_});
  params_.push_back({"cff1.low.b", cff1_low_b_});
  params_.push_back({"cff1.high.w", cff1_high_w_});
  params_.push_back({"cff1.high.b", cff1_high_b_});
  params_.push_back({"cff2.low.w", cff2_low_w_});
  params_.push_back({"cff2.low.b", cff2_low_b_});
  params_.push_back({"cff2.high.w", cff2_high_w_});
  params_.push_back({"cff2.high.b", cff2_high_b_});
  params_.push_back({"head.w", head_w_});
  params_.push_back({"head.b", head_b_});
  static const char* unit_names[4] = {"unit_b1", "unit_b2", "unit_b3", "unit_head"};
  for (int u = 0; u < 4; ++u)
    if (has_unit_[std::size_t(u)])
      units_[std::size_t(u)].collect_params(unit_names[u], params_);
}

template <typename T>
NetworkState<T> Network<T>::initial_state() const {
  NetworkState<T> s;
  const int H = cfg_.height, W = cfg_.width;
  if (has_unit_[0]) s.units[0] = units_[0].initial_state(H, W);
  if (has_unit_[1]) s.units[1] = units_[1].initial_state(H / 2, W / 2);
  if (has_unit_[2]) s.units[2] = units_[2].initial_state(H / 4, W / 4);
  if (has_unit_[3]) s.units[3] = units_[3].initial_state(H, W);
  return s;
}

template <typename T>
Tensor<T> Network<T>::run_branch(Context<T>& ctx, int idx, const Tensor<T>& x) const {
  Tensor<T> t = x;
  for (const auto& blk : branches_[std::size_t(idx)]) {
    t = conv2d(ctx, t, blk.w, blk.b);
    t = channel_affine(ctx, t, blk.gamma, blk.beta);
    t = relu(ctx, t);
  }
  return t;
}

template <typename T>
std::pair<Tensor<T>, NetworkState<T>> Network<T>::forward_frame(
    Context<T>& ctx, const Tensor<T>& x, const NetworkState<T>& state) const {
  require(x.shape().c == 3 && x.shape().h == cfg_.height && x.shape().w == cfg_.width,
          "forward_frame: input extents " + x.shape().str() + " do not match config");

  NetworkState<T> next = state;
  Tensor<T> b1 = run_branch(ctx, 0, x);
  Tensor<T> x2 = resize_bilinear(ctx, x, 0.5);
  Tensor<T> b2 = run_branch(ctx, 1, x2);
  Tensor<T> x4 = resize_bilinear(ctx, x2, 0.5);
  Tensor<T> b3 = run_branch(ctx, 2, x4);

  if (has_unit_[0]) std::tie(b1, next.units[0]) = units_[0].forward(ctx, b1, state.units[0]);
  if (has_unit_[1]) std::tie(b2, next.units[1]) = units_[1].forward(ctx, b2, state.units[1]);
  if (has_unit_[2]) std::tie(b3, next.units[2]) = units_[2].forward(ctx, b3, state.units[2]);

  Tensor<T> f2 = relu(
      ctx, add(ctx,
               pointwise_conv2d(ctx, resize_bilinear(ctx, b3, 2.0), cff1_low_w_, cff1_low_b_),
               pointwise_conv2d(ctx, b2, cff1_high_w_, cff1_high_b_)));
  Tensor<T> f1 = relu(
      ctx, add(ctx,
               pointwise_conv2d(ctx, resize_bilinear(ctx, f2, 2.0), cff2_low_w_, cff2_low_b_),
               pointwise_conv2d(ctx, b1, cff2_high_w_, cff2_high_b_)));

  Tensor<T> logits = pointwise_conv2d(ctx, f1, head_w_, head_b_);
  if (has_unit_[3])
    std::tie(logits, next.units[3]) = units_[3].forward(ctx, logits, state.units[3]);
  Tensor<T> probs = softmax_channels(ctx, logits);
  return {probs, next};
}

template <typename T>
std::pair<Tensor<T>, NetworkState<T>> Network<T>::forward_sequence(
    Context<T>& ctx, const std::vector<Tensor<T>>& frames) const {
  require(!frames.empty(), "forward_sequence: empty frame sequence");
  NetworkState<T> state = initial_state();
  Tensor<T> probs;
  for (const auto& f : frames) std::tie(probs, state) = forward_frame(ctx, f, state);
  return {probs, state};
}

template <typename T>
std::vector<Tensor<T>> Network<T>::forward_sequence_all(
    Context<T>& ctx, const std::vector<Tensor<T>>& frames) const {
  require(!frames.empty(), "forward_sequence_all: empty frame sequence");
  NetworkState<T> state = initial_state();
  std::vector<Tensor<T>> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    auto [probs, next] = forward_frame(ctx, f, state);
    out.push_back(probs);
    state = next;
  }
  return out;
}

template <typename T>
std::int64_t Network<T>::param_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <typename T>
std::int64_t Network<T>::recurrent_param_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_)
    if (p.name.rfind("unit_", 0) == 0) n += p.tensor.numel();
  return n;
}

template <typename T>
int Network<T>::placed_units() const {
  int n = 0;
  for (bool b : has_unit_) n += b ? 1 : 0;
  return n;
}

template class Network<float>;
template class Network<double>;

}  // namespace vseg
