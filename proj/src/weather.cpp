#include "vseg/weather.hpp"

#include <algorithm>
#include <cmath>

namespace vseg {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_unit_range(const Image& img, const char* op) {
  for (float v : img.data)
    require(v >= 0.0f && v <= 1.0f, std::string(op) + ": input values must lie in [0,1]");
}

float clamp01(float v) { return v < 0.f ? 0.f : (v > 1.f ? 1.f : v); }

}  // namespace

void RainParams::validate() const {
  require(n_lines >= 0, "rain: N must be >= 0");
  require(line_length >= 1, "rain: line length must be >= 1");
  require(brightness_factor > 0.0 && brightness_factor <= 1.0,
          "rain: brightness factor must lie in (0,1]");
}

RainLevel rain_level_from_name(const std::string& s) {
  if (s == "light") return RainLevel::Light;
  if (s == "moderate") return RainLevel::Moderate;
  if (s == "heavy") return RainLevel::Heavy;
  fail("unknown rain level '" + s + "' (expected light|moderate|heavy)");
}

const char* rain_level_name(RainLevel level) {
  switch (level) {
    case RainLevel::Light: return "light";
    case RainLevel::Moderate: return "moderate";
    case RainLevel::Heavy: return "heavy";
  }
  return "?";
}

RainParams rain_preset(RainLevel level) {
  RainParams p;
  switch (level) {
    case RainLevel::Light:
      p.n_lines = 500;
      p.line_length = 10;
      break;
    case RainLevel::Moderate:
      p.n_lines = 1500;
      p.line_length = 30;
      break;
    case RainLevel::Heavy:
      p.n_lines = 2500;
      p.line_length = 60;
      break;
  }
  p.brightness_factor = 0.7;
  return p;
}

Image simulate_rain(const Image& img, const RainParams& p) {
  p.validate();
  check_unit_range(img, "simulate_rain");
  Image out = img;
  const std::size_t plane = std::size_t(img.h) * img.w;
  if (p.n_lines > 0) {
    Rng rng(p.seed);
    // one constant slant per image
    const double slant = rng.uniform(p.slant_min_deg, p.slant_max_deg) * kPi / 180.0;
    const double dx = std::cos(slant), dy = std::sin(slant);
    for (int line = 0; line < p.n_lines; ++line) {
      const double x0 = rng.uniform(0.0, double(img.w));
      const double y0 = rng.uniform(0.0, double(img.h));
      for (int t = 0; t < p.line_length; ++t) {
        const int x = int(std::lround(x0 + t * dx));
        const int y = int(std::lround(y0 + t * dy));
        if (x < 0 || x >= img.w || y < 0 || y >= img.h) continue;
        for (int c = 0; c < img.c; ++c)
          out.data[c * plane + std::size_t(y) * img.w + x] = p.line_intensity;
      }
    }
  }
  // rainy frames are darker; the streaks darken with the image
  const float f = float(p.brightness_factor);
  for (auto& v : out.data) v = clamp01(v * f);
  return out;
}

Image add_noise(const Image& img, NoiseKind kind, double amount, std::uint64_t seed) {
  check_unit_range(img, "add_noise");
  Image out = img;
  Rng rng(seed);
  if (kind == NoiseKind::Gaussian) {
    require(amount >= 0.0, "add_noise: sigma must be >= 0");
    for (auto& v : out.data) v = clamp01(v + float(amount * rng.normal()));
  } else {
    require(amount >= 0.0 && amount <= 1.0, "add_noise: probability must lie in [0,1]");
    const std::size_t plane = std::size_t(img.h) * img.w;
    for (std::size_t p = 0; p < plane; ++p) {
      const double u = rng.uniform();
      if (u < amount / 2.0) {
        for (int c = 0; c < img.c; ++c) out.data[c * plane + p] = 0.0f;
      } else if (u < amount) {
        for (int c = 0; c < img.c; ++c) out.data[c * plane + p] = 1.0f;
      }
    }
  }
  return out;
}

Image add_white_polygon(const Image& img, int max_vertices, double max_extent_fraction,
                        std::uint64_t seed) {
  check_unit_range(img, "add_white_polygon");
  require(max_vertices >= 3, "add_white_polygon: need at least 3 vertices");
  require(max_extent_fraction > 0.0 && max_extent_fraction <= 1.0,
          "add_white_polygon: extent fraction must lie in (0,1]");
  Rng rng(seed);
  // a convex polygon inscribed in a circle of radius R covers at most pi*R^2
  const double rmax = std::sqrt(max_extent_fraction * img.h * img.w / kPi);
  const double radius = rng.uniform(0.3, 1.0) * rmax;
  const double cx = rng.uniform(0.0, double(img.w));
  const double cy = rng.uniform(0.0, double(img.h));
  const int verts = 3 + rng.uniform_int(max_vertices - 2);
  std::vector<double> angles(std::size_t(verts), 0.0);
  for (auto& a : angles) a = rng.uniform(0.0, 2.0 * kPi);
  std::sort(angles.begin(), angles.end());
  std::vector<double> px(std::size_t(verts), 0.0), py(std::size_t(verts), 0.0);
  for (int i = 0; i < verts; ++i) {
    px[std::size_t(i)] = cx + radius * std::cos(angles[std::size_t(i)]);
    py[std::size_t(i)] = cy + radius * std::sin(angles[std::size_t(i)]);
  }
  auto inside = [&](double x, double y) {
    // convex, counterclockwise vertex order: inside iff left of every edge
    for (int i = 0; i < verts; ++i) {
      const int j = (i + 1) % verts;
      const double ex = px[std::size_t(j)] - px[std::size_t(i)];
      const double ey = py[std::size_t(j)] - py[std::size_t(i)];
      if (ex * (y - py[std::size_t(i)]) - ey * (x - px[std::size_t(i)]) < 0) return false;
    }
    return true;
  };
  Image out = img;
  const std::size_t plane = std::size_t(img.h) * img.w;
  const int y0 = std::max(0, int(cy - radius) - 1), y1 = std::min(img.h, int(cy + radius) + 2);
  const int x0 = std::max(0, int(cx - radius) - 1), x1 = std::min(img.w, int(cx + radius) + 2);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      if (inside(x + 0.5, y + 0.5))
        for (int c = 0; c < img.c; ++c) out.data[c * plane + std::size_t(y) * img.w + x] = 1.0f;
  return out;
}

Image adjust_brightness(const Image& img, double factor) {
  check_unit_range(img, "adjust_brightness");
  require(factor >= 0.0, "adjust_brightness: factor must be >= 0");
  Image out = img;
  for (auto& v : out.data) v = clamp01(v * float(factor));
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out = img;
  const std::size_t plane = std::size_t(img.h) * img.w;
  for (int c = 0; c < img.c; ++c)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x)
        out.data[c * plane + std::size_t(y) * img.w + x] =
            img.data[c * plane + std::size_t(y) * img.w + (img.w - 1 - x)];
  return out;
}

LabelMap flip_horizontal(const LabelMap& labels) {
  LabelMap out = labels;
  for (int y = 0; y < labels.h; ++y)
    for (int x = 0; x < labels.w; ++x) out.at(y, x) = labels.at(y, labels.w - 1 - x);
  return out;
}

namespace {

// source coordinate for crop-and-resize about the center; borders replicate
inline double src_coord(int d, int extent, double s) {
  const double center = 0.5 * extent;
  return center + (d + 0.5 - center) / s - 0.5;
}

}  // namespace

Image rescale(const Image& img, double s) {
  require(s > 0.0, "rescale: scale must be positive");
  Image out(img.c, img.h, img.w);
  const std::size_t plane = std::size_t(img.h) * img.w;
  for (int y = 0; y < img.h; ++y) {
    const double sy = src_coord(y, img.h, s);
    const int y0 = std::clamp(int(std::floor(sy)), 0, img.h - 1);
    const int y1 = std::min(y0 + 1, img.h - 1);
    const double fy = std::clamp(sy - y0, 0.0, 1.0);
    for (int x = 0; x < img.w; ++x) {
      const double sx = src_coord(x, img.w, s);
      const int x0 = std::clamp(int(std::floor(sx)), 0, img.w - 1);
      const int x1 = std::min(x0 + 1, img.w - 1);
      const double fx = std::clamp(sx - x0, 0.0, 1.0);
      for (int c = 0; c < img.c; ++c) {
        const float* p = img.data.data() + c * plane;
        const double top = p[std::size_t(y0) * img.w + x0] * (1 - fx) +
                           p[std::size_t(y0) * img.w + x1] * fx;
        const double bot = p[std::size_t(y1) * img.w + x0] * (1 - fx) +
                           p[std::size_t(y1) * img.w + x1] * fx;
        out.data[c * plane + std::size_t(y) * img.w + x] =
            clamp01(float(top * (1 - fy) + bot * fy));
      }
    }
  }
  return out;
}

LabelMap rescale(const LabelMap& labels, double s) {
  require(s > 0.0, "rescale: scale must be positive");
  LabelMap out(labels.h, labels.w);
  for (int y = 0; y < labels.h; ++y) {
    const int sy = std::clamp(int(std::lround(src_coord(y, labels.h, s))), 0, labels.h - 1);
    for (int x = 0; x < labels.w; ++x) {
      const int sx = std::clamp(int(std::lround(src_coord(x, labels.w, s))), 0, labels.w - 1);
      out.at(y, x) = labels.at(sy, sx);
    }
  }
  return out;
}

Disturbance make_rain_disturbance(const RainParams& p) {
  Disturbance d;
  d.kind = Disturbance::Kind::Rain;
  d.rain = p;
  return d;
}

namespace {

Image apply_disturbance(const Image& img, const Disturbance& d, std::uint64_t seed) {
  switch (d.kind) {
    case Disturbance::Kind::Rain: {
      RainParams p = d.rain;
      p.seed = seed;
      return simulate_rain(img, p);
    }
    case Disturbance::Kind::Gaussian:
      return add_noise(img, NoiseKind::Gaussian, d.amount, seed);
    case Disturbance::Kind::SaltPepper:
      return add_noise(img, NoiseKind::SaltPepper, d.amount, seed);
    case Disturbance::Kind::Polygon:
      return add_white_polygon(img, d.max_vertices, d.extent_fraction, seed);
    case Disturbance::Kind::Brightness:
      return adjust_brightness(img, d.amount);
  }
  fail("apply_disturbance: bad kind");
}

}  // namespace

VideoSample apply_policy(const VideoSample& sample, const DisturbancePolicy& policy,
                         const Disturbance& disturbance, std::uint64_t seed) {
  require(!sample.frames.empty(), "apply_policy: empty sequence");
  VideoSample out = sample;
  const int t = int(sample.frames.size());
  Rng pick(splitmix64(seed ^ 0x7e11));
  for (int i = 0; i < t; ++i) {
    bool hit = false;
    switch (policy.mode) {
      case DisturbancePolicy::Mode::LastFrameOnly: hit = (i == t - 1); break;
      case DisturbancePolicy::Mode::AllFrames: hit = true; break;
      case DisturbancePolicy::Mode::RandomSubset:
        hit = pick.bernoulli(policy.subset_probability);
        break;
    }
    if (hit)
      out.frames[std::size_t(i)] = apply_disturbance(
          sample.frames[std::size_t(i)], disturbance,
          splitmix64(seed + 0x1000003 * std::uint64_t(i + 1)));
  }
  return out;  // label map untouched
}

VideoSample apply_geometric(const VideoSample& sample, const GeometricAugment& g) {
  require(!sample.frames.empty(), "apply_geometric: empty sequence");
  VideoSample out = sample;
  if (g.flip) {
    for (auto& f : out.frames) f = flip_horizontal(f);
    out.label = flip_horizontal(out.label);
  }
  if (g.scaled && g.scale != 1.0) {
    for (auto& f : out.frames) f = rescale(f, g.scale);
    out.label = rescale(out.label, g.scale);
  }
  return out;
}

}  // namespace vseg
