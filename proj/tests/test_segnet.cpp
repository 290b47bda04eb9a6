#include <doctest.h>

#include "oracles.hpp"
#include "vseg/segnet.hpp"

using namespace vseg;
using namespace vseg::testing;

namespace {

NetworkConfig small_config(NetVersion v, UnitDesign d) {
  NetworkConfig cfg;
  cfg.num_classes = 4;
  cfg.base_channels = 4;
  cfg.branch_depths = {1, 1, 2};
  cfg.height = 16;
  cfg.width = 24;
  cfg.version = v;
  cfg.unit_design = d;
  return cfg;
}

std::vector<Tensor<double>> random_frames(int t, int h, int w, Rng& rng) {
  std::vector<Tensor<double>> frames;
  for (int i = 0; i < t; ++i)
    frames.push_back(random_tensor<double>(Shape(3, h, w), rng, 0.0, 1.0));
  return frames;
}

}  // namespace

TEST_CASE("config validation") {
  NetworkConfig cfg = small_config(NetVersion::Base, UnitDesign::Standard);
  cfg.height = 18;  // not divisible by 4
  CHECK_THROWS(cfg.validate());
  cfg = small_config(NetVersion::Base, UnitDesign::Standard);
  cfg.num_classes = 1;
  CHECK_THROWS(cfg.validate());
  cfg = small_config(NetVersion::V2, UnitDesign::Fast);
  cfg.num_classes = 5;  // head unit needs even channels
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("placement counts per version") {
  CHECK(unit_count(NetVersion::Base) == 0);
  CHECK(unit_count(NetVersion::V2) == 1);
  CHECK(unit_count(NetVersion::V5) == 3);
  CHECK(unit_count(NetVersion::V6) == 4);
  for (NetVersion v : {NetVersion::Base, NetVersion::V2, NetVersion::V5, NetVersion::V6}) {
    Network<double> net(small_config(v, UnitDesign::Standard), 5);
    CHECK(net.placed_units() == unit_count(v));
    if (v == NetVersion::Base) CHECK(net.recurrent_param_count() == 0);
    if (v != NetVersion::Base) CHECK(net.recurrent_param_count() > 0);
  }
}

TEST_CASE("output is a per-pixel probability simplex of the right shape") {
  Rng rng(21);
  for (NetVersion v : {NetVersion::Base, NetVersion::V2, NetVersion::V5}) {
    Network<double> net(small_config(v, UnitDesign::Faster), 7);
    Context<double> ctx;
    Tensor<double> x = random_tensor<double>(Shape(3, 16, 24), rng, 0.0, 1.0);
    auto [probs, state] = net.forward_frame(ctx, x, net.initial_state());
    CHECK(probs.shape() == Shape(4, 16, 24));
    for (int y = 0; y < 16; ++y)
      for (int xx = 0; xx < 24; ++xx) {
        double s = 0;
        for (int c = 0; c < 4; ++c) s += probs.at(c, y, xx);
        CHECK(std::abs(s - 1.0) < 1e-6);
      }
  }
  Network<double> net(small_config(NetVersion::Base, UnitDesign::Standard), 7);
  Context<double> ctx;
  Tensor<double> wrong = random_tensor<double>(Shape(3, 16, 20), rng);
  CHECK_THROWS(net.forward_frame(ctx, wrong, net.initial_state()));
  CHECK_THROWS(net.forward_sequence(ctx, {}));
}

TEST_CASE("base version is exactly frame-independent") {
  Rng rng(22);
  Network<double> net(small_config(NetVersion::Base, UnitDesign::Standard), 9);
  Context<double> ctx;
  auto frames = random_frames(4, 16, 24, rng);
  auto [seq_probs, s1] = net.forward_sequence(ctx, frames);
  auto [last_probs, s2] = net.forward_frame(ctx, frames.back(), net.initial_state());
  CHECK(max_abs_diff(seq_probs, last_probs) == 0.0);

  // output independent of the state argument
  auto [probs_again, s3] = net.forward_frame(ctx, frames.back(), s1);
  CHECK(max_abs_diff(probs_again, last_probs) == 0.0);
}

TEST_CASE("T=1 sequence equals a single frame from zero state") {
  Rng rng(23);
  Network<double> net(small_config(NetVersion::V5, UnitDesign::Fast), 11);
  Context<double> ctx;
  auto frames = random_frames(1, 16, 24, rng);
  auto [a, s1] = net.forward_sequence(ctx, frames);
  auto [b, s2] = net.forward_frame(ctx, frames[0], net.initial_state());
  CHECK(max_abs_diff(a, b) == 0.0);
}

TEST_CASE("recurrent versions depend on frame order and history") {
  Rng rng(24);
  Network<double> net(small_config(NetVersion::V5, UnitDesign::Standard), 13);
  Context<double> ctx;
  auto frames = random_frames(4, 16, 24, rng);

  // two sequences sharing the final frame but different earlier frames
  auto other = random_frames(4, 16, 24, rng);
  other.back() = frames.back();
  auto [p1, s1] = net.forward_sequence(ctx, frames);
  auto [p2, s2] = net.forward_sequence(ctx, other);
  CHECK(max_abs_diff(p1, p2) > 1e-9);

  // swapped order of the two leading frames changes the second-frame output
  std::vector<Tensor<double>> ab = {frames[0], frames[1]};
  std::vector<Tensor<double>> ba = {frames[1], frames[0]};
  auto pa = net.forward_sequence_all(ctx, ab);
  auto pb = net.forward_sequence_all(ctx, ba);
  CHECK(max_abs_diff(pa[1], pb[1]) > 1e-12);
}

TEST_CASE("sequence forward equals a manual frame loop") {
  Rng rng(25);
  Network<double> net(small_config(NetVersion::V6, UnitDesign::Faster), 15);
  Context<double> ctx;
  auto frames = random_frames(3, 16, 24, rng);
  auto [probs, state] = net.forward_sequence(ctx, frames);

  NetworkState<double> s = net.initial_state();
  Tensor<double> manual;
  for (const auto& f : frames) std::tie(manual, s) = net.forward_frame(ctx, f, s);
  CHECK(max_abs_diff(probs, manual) == 0.0);
}

TEST_CASE("unit design changes parameter counts but never output shapes") {
  Rng rng(26);
  std::int64_t std_params = 0, fast_params = 0, faster_params = 0;
  for (UnitDesign d : {UnitDesign::Standard, UnitDesign::Fast, UnitDesign::Faster}) {
    Network<double> net(small_config(NetVersion::V5, d), 17);
    Context<double> ctx;
    Tensor<double> x = random_tensor<double>(Shape(3, 16, 24), rng, 0.0, 1.0);
    auto [probs, state] = net.forward_frame(ctx, x, net.initial_state());
    CHECK(probs.shape() == Shape(4, 16, 24));
    const std::int64_t rp = net.recurrent_param_count();
    if (d == UnitDesign::Standard) std_params = rp;
    if (d == UnitDesign::Fast) fast_params = rp;
    if (d == UnitDesign::Faster) faster_params = rp;
  }
  CHECK(faster_params < fast_params);
  CHECK(fast_params < std_params);
}

TEST_CASE("v2 with a zeroed recurrent unit degenerates to the zero-logit path") {
  Network<double> net(small_config(NetVersion::V2, UnitDesign::Standard), 19);
  for (auto& p : net.params())
    if (p.name.rfind("unit_", 0) == 0)
      std::fill(p.tensor.mutable_vec().begin(), p.tensor.mutable_vec().end(), 0.0);
  Rng rng(27);
  Context<double> ctx;
  Tensor<double> x = random_tensor<double>(Shape(3, 16, 24), rng, 0.0, 1.0);
  auto [probs, state] = net.forward_frame(ctx, x, net.initial_state());
  // the unit output is zero everywhere, so the softmax sees zero logits
  for (double v : probs.vec()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("end-to-end gradient check through a V2 micro-network") {
  NetworkConfig cfg;
  cfg.num_classes = 4;
  cfg.base_channels = 2;
  cfg.branch_depths = {1, 1, 1};
  cfg.height = 8;
  cfg.width = 8;
  cfg.version = NetVersion::V2;
  cfg.unit_design = UnitDesign::Standard;
  Network<double> net(cfg, 23);

  Rng rng(28);
  auto frames = random_frames(2, 8, 8, rng);
  std::vector<std::uint8_t> labels(64);
  for (auto& l : labels) l = std::uint8_t(rng.uniform_int(4));

  std::vector<Tensor<double>> params;
  for (auto& p : net.params()) params.push_back(p.tensor);
  auto loss = [&](Context<double>& c) {
    auto [probs, state] = net.forward_sequence(c, frames);
    return nll_loss(c, probs, labels);
  };
  CHECK(gradcheck(params, loss, 1e-5, 6) < 1e-4);
}
