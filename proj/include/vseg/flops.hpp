#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vseg/recurrent.hpp"

namespace vseg {

// Symbols of the analytic recurrent-unit cost formulas: channel counts I/O,
// kernel extents Kx/Ky, feature-map extents Dx/Dy.
struct UnitCostInputs {
  std::int64_t in_channels = 0;   // I
  std::int64_t out_channels = 0;  // O
  std::int64_t kx = 0, ky = 0;
  std::int64_t dx = 0, dy = 0;

  void validate(bool halved) const;
};

// (16*Kx*Ky*I + 37) * O * Dx * Dy
std::uint64_t flops_standard_unit(const UnitCostInputs& c);

// ((16*Kx*Ky*I + 37) * O/2 + 2*I*O/2) * Dx * Dy
std::uint64_t flops_fast_unit(const UnitCostInputs& c);

// ((2*I + 16*Kx*Ky + 37) * O/2 + 2*I*O/2) * Dx * Dy
std::uint64_t flops_faster_unit(const UnitCostInputs& c);

std::uint64_t flops_unit(UnitDesign design, const UnitCostInputs& c);

// conv-only FLOPs of each formula (the terms scaled by 2 FLOPs per MAC);
// the "+37" elementwise budget is excluded
std::uint64_t conv_flops_unit(UnitDesign design, const UnitCostInputs& c);

struct PlacementCost {
  std::string placement;
  UnitCostInputs inputs;
  std::uint64_t flops = 0;
};

struct CostReport {
  std::string version;
  std::string design;
  std::vector<PlacementCost> placements;
  std::uint64_t total = 0;  // equals the sum of placements

  std::string to_json() const;
};

struct NetworkConfig;  // segnet.hpp

// Recurrent-unit FLOPs summed over one version's placements at their actual
// feature-map sizes.
CostReport version_cost_report(const NetworkConfig& cfg, UnitDesign design);

// All versions and designs at the config's widths and extents, with design
// ratios per version.
struct NetworkCostReport {
  std::vector<CostReport> variants;

  std::string to_json() const;
  std::string to_table() const;
};

NetworkCostReport network_cost_report(const NetworkConfig& cfg);

// Runs one forward step of a freshly built unit with MAC instrumentation on
// and returns the multiply-accumulates performed by the conv/depthwise/
// pointwise operations.
std::uint64_t measure_unit_macs(UnitDesign design, int channels, int kh, int kw, int dx,
                                int dy);

// MAC count recorded on a context; errors if instrumentation was off.
template <typename T>
std::uint64_t measured_macs(const Context<T>& ctx) {
  require(ctx.count_macs, "measured_macs: instrumentation disabled on this context");
  return ctx.conv_macs;
}

}  // namespace vseg
