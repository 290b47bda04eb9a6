#pragma once

#include <cstdint>
#include <string>

#include "vseg/dataset.hpp"
#include "vseg/image.hpp"

namespace vseg {

// Rain streak simulation: N lines of pixel length l at one constant slant
// per image, then a global brightness reduction.
struct RainParams {
  int n_lines = 0;
  int line_length = 1;
  double brightness_factor = 0.7;
  float line_intensity = 0.9f;        // near-white streak grey
  double slant_min_deg = 60.0;        // slant from horizontal, drawn per image
  double slant_max_deg = 120.0;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class RainLevel { Light, Moderate, Heavy };

RainLevel rain_level_from_name(const std::string& s);
const char* rain_level_name(RainLevel level);

// light (500,10), moderate (1500,30), heavy (2500,60); brightness 0.7
RainParams rain_preset(RainLevel level);

Image simulate_rain(const Image& img, const RainParams& p);

enum class NoiseKind { Gaussian, SaltPepper };

// gaussian: adds sigma-scaled noise per element; salt_pepper: sets each pixel
// (all channels together) to 0 or 1 with probability amount/2 each.
Image add_noise(const Image& img, NoiseKind kind, double amount, std::uint64_t seed);

// One seeded convex polygon filled with 1.0 on all channels; covered area is
// bounded by max_extent_fraction * H * W.
Image add_white_polygon(const Image& img, int max_vertices, double max_extent_fraction,
                        std::uint64_t seed);

Image adjust_brightness(const Image& img, double factor);
Image flip_horizontal(const Image& img);
LabelMap flip_horizontal(const LabelMap& labels);

// crop-and-resize about the image center by scale s (bilinear for frames,
// nearest-neighbor for labels; border pixels replicate when zooming out)
Image rescale(const Image& img, double s);
LabelMap rescale(const LabelMap& labels, double s);

// Which frames of a sequence receive a disturbance.
struct DisturbancePolicy {
  enum class Mode { LastFrameOnly, AllFrames, RandomSubset };
  Mode mode = Mode::LastFrameOnly;
  double subset_probability = 0.5;  // RandomSubset only

  static DisturbancePolicy last_frame_only() { return {Mode::LastFrameOnly, 0.0}; }
  static DisturbancePolicy all_frames() { return {Mode::AllFrames, 0.0}; }
  static DisturbancePolicy random_subset(double p) { return {Mode::RandomSubset, p}; }
};

// Per-frame disturbance dispatch used by apply_policy and the perturb tool.
struct Disturbance {
  enum class Kind { Rain, Gaussian, SaltPepper, Polygon, Brightness };
  Kind kind = Kind::Rain;
  RainParams rain;          // Kind::Rain
  double amount = 0.0;      // sigma / probability / brightness factor
  int max_vertices = 6;     // Kind::Polygon
  double extent_fraction = 0.15;
};

Disturbance make_rain_disturbance(const RainParams& p);

// Applies the disturbance to the frames selected by the policy; the label map
// is never disturbed. Seeded per frame so repeated calls are bit-identical.
VideoSample apply_policy(const VideoSample& sample, const DisturbancePolicy& policy,
                         const Disturbance& disturbance, std::uint64_t seed);

// Geometric augmentation applied identically to every frame and the label map.
struct GeometricAugment {
  bool flip = false;
  bool scaled = false;
  double scale = 1.0;  // in [0.75, 1.25]
};

VideoSample apply_geometric(const VideoSample& sample, const GeometricAugment& g);

}  // namespace vseg
