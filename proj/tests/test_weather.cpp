#include <doctest.h>

#include <cmath>

#include "vseg/weather.hpp"

using namespace vseg;

namespace {

Image random_image(int c, int h, int w, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Image img(c, h, w);
  for (auto& v : img.data) v = float(rng.uniform(lo, hi));
  return img;
}

bool in_unit_range(const Image& img) {
  for (float v : img.data)
    if (v < 0.0f || v > 1.0f) return false;
  return true;
}

}  // namespace

TEST_CASE("rain presets match the published intensities") {
  const RainParams light = rain_preset(RainLevel::Light);
  CHECK(light.n_lines == 500);
  CHECK(light.line_length == 10);
  CHECK(light.brightness_factor == 0.7);
  const RainParams moderate = rain_preset(RainLevel::Moderate);
  CHECK(moderate.n_lines == 1500);
  CHECK(moderate.line_length == 30);
  const RainParams heavy = rain_preset(RainLevel::Heavy);
  CHECK(heavy.n_lines == 2500);
  CHECK(heavy.line_length == 60);
  CHECK(rain_level_from_name("heavy") == RainLevel::Heavy);
  CHECK_THROWS(rain_level_from_name("monsoon"));
}

TEST_CASE("rain with N=0 is exactly the brightness-only path") {
  Rng rng(51);
  Image img = random_image(3, 24, 32, rng);
  RainParams p;
  p.n_lines = 0;
  p.seed = 9;
  const Image out = simulate_rain(img, p);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(out.data[i] == img.data[i] * 0.7f);
}

TEST_CASE("rain is bit-deterministic per seed and varies across seeds") {
  Rng rng(52);
  Image img = random_image(3, 40, 56, rng);
  RainParams p = rain_preset(RainLevel::Light);
  p.seed = 1234;
  const Image a = simulate_rain(img, p);
  const Image b = simulate_rain(img, p);
  CHECK(a.data == b.data);
  p.seed = 1235;
  const Image c = simulate_rain(img, p);
  CHECK(a.data != c.data);
  CHECK(in_unit_range(a));

  Image bad = img;
  bad.data[0] = 1.5f;
  CHECK_THROWS(simulate_rain(bad, p));
  RainParams neg = p;
  neg.n_lines = -1;
  CHECK_THROWS(simulate_rain(img, neg));
  RainParams zero_b = p;
  zero_b.brightness_factor = 0.0;
  CHECK_THROWS(simulate_rain(img, zero_b));
}

TEST_CASE("gaussian noise") {
  Rng rng(53);
  Image img = random_image(3, 16, 16, rng);
  const Image same = add_noise(img, NoiseKind::Gaussian, 0.0, 77);
  CHECK(same.data == img.data);

  const Image noisy = add_noise(img, NoiseKind::Gaussian, 0.1, 77);
  CHECK(noisy.data != img.data);
  CHECK(in_unit_range(noisy));
  CHECK(add_noise(img, NoiseKind::Gaussian, 0.1, 77).data == noisy.data);
  CHECK_THROWS(add_noise(img, NoiseKind::Gaussian, -0.1, 77));
}

TEST_CASE("salt-and-pepper statistics and extremes") {
  Rng rng(54);
  // values away from {0,1} so corrupted pixels are unambiguous
  Image img = random_image(3, 256, 256, rng, 0.25, 0.75);

  const Image all = add_noise(img, NoiseKind::SaltPepper, 1.0, 5);
  const std::size_t plane = std::size_t(256) * 256;
  for (std::size_t p = 0; p < plane; ++p) {
    const float v = all.data[p];
    CHECK((v == 0.0f || v == 1.0f));
  }

  const double prob = 0.08;
  const Image sp = add_noise(img, NoiseKind::SaltPepper, prob, 6);
  std::size_t corrupted = 0;
  for (std::size_t p = 0; p < plane; ++p)
    if (sp.data[p] == 0.0f || sp.data[p] == 1.0f) ++corrupted;
  const double frac = double(corrupted) / double(plane);
  const double se = std::sqrt(prob * (1 - prob) / double(plane));
  CHECK(std::abs(frac - prob) < 3 * se);

  CHECK_THROWS(add_noise(img, NoiseKind::SaltPepper, 1.5, 6));
}

TEST_CASE("white polygons") {
  Rng rng(55);
  Image img = random_image(3, 48, 64, rng, 0.1, 0.6);
  const double frac = 0.1;
  const Image out = add_white_polygon(img, 7, frac, 42);
  CHECK(add_white_polygon(img, 7, frac, 42).data == out.data);

  const std::size_t plane = std::size_t(48) * 64;
  std::size_t covered = 0;
  for (std::size_t p = 0; p < plane; ++p) {
    const bool white = out.data[p] == 1.0f && out.data[plane + p] == 1.0f &&
                       out.data[2 * plane + p] == 1.0f;
    const bool changed = out.data[p] != img.data[p];
    if (changed) {
      CHECK(white);  // polygon pixels are exactly 1.0 on all channels
      ++covered;
    }
  }
  CHECK(covered > 0);
  CHECK(double(covered) <= frac * 48 * 64);

  CHECK_THROWS(add_white_polygon(img, 7, 0.0, 1));
  CHECK_THROWS(add_white_polygon(img, 2, 0.5, 1));
}

TEST_CASE("apply_policy targets only the selected frames and never the label") {
  Rng rng(56);
  VideoSample sample;
  sample.id = "s";
  for (int t = 0; t < 4; ++t) sample.frames.push_back(random_image(3, 24, 32, rng));
  sample.label = LabelMap(24, 32);
  for (auto& v : sample.label.data) v = std::uint8_t(rng.uniform_int(5));

  Disturbance rain = make_rain_disturbance(rain_preset(RainLevel::Light));

  const VideoSample last =
      apply_policy(sample, DisturbancePolicy::last_frame_only(), rain, 3);
  for (int t = 0; t < 3; ++t) CHECK(last.frames[std::size_t(t)].data == sample.frames[std::size_t(t)].data);
  CHECK(last.frames[3].data != sample.frames[3].data);
  CHECK(last.label.data == sample.label.data);

  const VideoSample all = apply_policy(sample, DisturbancePolicy::all_frames(), rain, 3);
  for (int t = 0; t < 4; ++t) {
    CHECK(all.frames[std::size_t(t)].data != sample.frames[std::size_t(t)].data);
    CHECK(in_unit_range(all.frames[std::size_t(t)]));
  }

  // bit-identical reruns
  const VideoSample again = apply_policy(sample, DisturbancePolicy::all_frames(), rain, 3);
  for (int t = 0; t < 4; ++t) CHECK(again.frames[std::size_t(t)].data == all.frames[std::size_t(t)].data);

  VideoSample empty;
  CHECK_THROWS(apply_policy(empty, DisturbancePolicy::all_frames(), rain, 3));
}

TEST_CASE("horizontal flip is an involution and keeps frames aligned with labels") {
  Rng rng(57);
  VideoSample sample;
  for (int t = 0; t < 3; ++t) sample.frames.push_back(random_image(3, 16, 20, rng));
  sample.label = LabelMap(16, 20);
  for (auto& v : sample.label.data) v = std::uint8_t(rng.uniform_int(4));

  GeometricAugment flip;
  flip.flip = true;
  const VideoSample once = apply_geometric(sample, flip);
  const VideoSample twice = apply_geometric(once, flip);
  for (int t = 0; t < 3; ++t) CHECK(twice.frames[std::size_t(t)].data == sample.frames[std::size_t(t)].data);
  CHECK(twice.label.data == sample.label.data);

  // per-pixel class identity is preserved under the mirror map
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 20; ++x) {
      CHECK(once.label.at(y, x) == sample.label.at(y, 19 - x));
      CHECK(once.frames[0].at(0, y, x) == sample.frames[0].at(0, y, 19 - x));
    }
}

TEST_CASE("crop-and-resize scaling keeps extents, range and label alignment") {
  Rng rng(58);
  VideoSample sample;
  for (int t = 0; t < 2; ++t) sample.frames.push_back(random_image(3, 32, 48, rng));
  sample.label = LabelMap(32, 48);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 48; ++x) sample.label.at(y, x) = std::uint8_t((x > 24) + 2 * (y > 16));

  for (double s : {0.75, 0.9, 1.1, 1.25}) {
    GeometricAugment g;
    g.scaled = true;
    g.scale = s;
    const VideoSample out = apply_geometric(sample, g);
    CHECK(out.frames[0].h == 32);
    CHECK(out.frames[0].w == 48);
    CHECK(out.label.h == 32);
    CHECK(in_unit_range(out.frames[0]));
    // the center pixel's class never changes under center scaling
    CHECK(out.label.at(16, 24) == sample.label.at(16, 24));
  }
}
