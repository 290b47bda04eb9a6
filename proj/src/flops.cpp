#include "vseg/flops.hpp"

#include <sstream>

#include "vseg/segnet.hpp"

namespace vseg {

void UnitCostInputs::validate(bool halved) const {
  require(in_channels > 0 && out_channels > 0, "unit cost: channel counts must be positive");
  require(kx > 0 && ky > 0, "unit cost: kernel extents must be positive");
  require(dx > 0 && dy > 0, "unit cost: feature-map extents must be positive");
  if (halved)
    require(out_channels % 2 == 0, "unit cost: O must be even for the halved designs");
}

std::uint64_t flops_standard_unit(const UnitCostInputs& c) {
  c.validate(false);
  const std::uint64_t per_elem = 16ull * c.kx * c.ky * c.in_channels + 37ull;
  return per_elem * c.out_channels * c.dx * c.dy;
}

std::uint64_t flops_fast_unit(const UnitCostInputs& c) {
  c.validate(true);
  const std::uint64_t half = std::uint64_t(c.out_channels) / 2;
  const std::uint64_t cell = (16ull * c.kx * c.ky * c.in_channels + 37ull) * half;
  const std::uint64_t pw = 2ull * c.in_channels * half;
  return (cell + pw) * c.dx * c.dy;
}

std::uint64_t flops_faster_unit(const UnitCostInputs& c) {
  c.validate(true);
  const std::uint64_t half = std::uint64_t(c.out_channels) / 2;
  const std::uint64_t cell = (2ull * c.in_channels + 16ull * c.kx * c.ky + 37ull) * half;
  const std::uint64_t pw = 2ull * c.in_channels * half;
  return (cell + pw) * c.dx * c.dy;
}

std::uint64_t flops_unit(UnitDesign design, const UnitCostInputs& c) {
  switch (design) {
    case UnitDesign::Standard: return flops_standard_unit(c);
    case UnitDesign::Fast: return flops_fast_unit(c);
    case UnitDesign::Faster: return flops_faster_unit(c);
  }
  return 0;
}

std::uint64_t conv_flops_unit(UnitDesign design, const UnitCostInputs& c) {
  const std::uint64_t d = std::uint64_t(c.dx) * c.dy;
  const std::uint64_t half = std::uint64_t(c.out_channels) / 2;
  switch (design) {
    case UnitDesign::Standard:
      c.validate(false);
      return 16ull * c.kx * c.ky * c.in_channels * c.out_channels * d;
    case UnitDesign::Fast:
      c.validate(true);
      return (16ull * c.kx * c.ky * c.in_channels * half + 2ull * c.in_channels * half) * d;
    case UnitDesign::Faster:
      c.validate(true);
      return (2ull * c.in_channels * half + 16ull * c.kx * c.ky * half +
              2ull * c.in_channels * half) *
             d;
  }
  return 0;
}

std::string CostReport::to_json() const {
  std::ostringstream os;
  os << "{\"version\":\"" << version << "\",\"design\":\"" << design << "\",";
  os << "\"placements\":[";
  for (std::size_t i = 0; i < placements.size(); ++i) {
    const auto& p = placements[i];
    if (i) os << ",";
    os << "{\"placement\":\"" << p.placement << "\",\"I\":" << p.inputs.in_channels
       << ",\"O\":" << p.inputs.out_channels << ",\"Kx\":" << p.inputs.kx
       << ",\"Ky\":" << p.inputs.ky << ",\"Dx\":" << p.inputs.dx << ",\"Dy\":" << p.inputs.dy
       << ",\"flops\":" << p.flops << "}";
  }
  os << "],\"total_flops\":" << total << "}";
  return os.str();
}

CostReport version_cost_report(const NetworkConfig& cfg, UnitDesign design) {
  cfg.validate();
  CostReport rep;
  rep.version = net_version_name(cfg.version);
  rep.design = unit_design_name(design);
  const bool branch_units = cfg.version == NetVersion::V5 || cfg.version == NetVersion::V6;
  const bool head_unit = cfg.version == NetVersion::V2 || cfg.version == NetVersion::V6;
  auto place = [&](const std::string& name, int channels, int dx, int dy) {
    UnitCostInputs ci{channels, channels, cfg.kernel, cfg.kernel, dx, dy};
    rep.placements.push_back({name, ci, flops_unit(design, ci)});
  };
  if (branch_units) {
    place("branch1", cfg.branch_width(0), cfg.width, cfg.height);
    place("branch2", cfg.branch_width(1), cfg.width / 2, cfg.height / 2);
    place("branch3", cfg.branch_width(2), cfg.width / 4, cfg.height / 4);
  }
  if (head_unit) place("head", cfg.num_classes, cfg.width, cfg.height);
  rep.total = 0;
  for (const auto& p : rep.placements) rep.total += p.flops;
  return rep;
}

NetworkCostReport network_cost_report(const NetworkConfig& cfg) {
  NetworkCostReport rep;
  for (NetVersion v : {NetVersion::Base, NetVersion::V2, NetVersion::V5, NetVersion::V6})
    for (UnitDesign d : {UnitDesign::Standard, UnitDesign::Fast, UnitDesign::Faster}) {
      NetworkConfig c = cfg;
      c.version = v;
      c.unit_design = d;
      rep.variants.push_back(version_cost_report(c, d));
      if (v == NetVersion::Base) break;  // no recurrent units, design is moot
    }
  return rep;
}

std::string NetworkCostReport::to_json() const {
  std::ostringstream os;
  os << "{\"variants\":[";
  for (std::size_t i = 0; i < variants.size(); ++i) {
    if (i) os << ",";
    os << variants[i].to_json();
  }
  os << "],\"ratios\":{";
  bool first = true;
  for (const auto& a : variants)
    for (const auto& b : variants)
      if (a.version == b.version && a.design != b.design && b.total > 0) {
        if (!first) os << ",";
        first = false;
        os.precision(10);
        os << "\"" << a.version << "." << a.design << "_over_" << b.design
           << "\":" << double(a.total) / double(b.total);
      }
  os << "}}";
  return os.str();
}

std::string NetworkCostReport::to_table() const {
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-8s %-10s %16s\n", "version", "design", "unit FLOPs");
  out += buf;
  for (const auto& v : variants) {
    std::snprintf(buf, sizeof(buf), "%-8s %-10s %16llu\n", v.version.c_str(),
                  v.design.c_str(), static_cast<unsigned long long>(v.total));
    out += buf;
  }
  return out;
}

std::uint64_t measure_unit_macs(UnitDesign design, int channels, int kh, int kw, int dx,
                                int dy) {
  Rng rng(20240521);
  RecurrentUnitSpec spec{design, channels, channels, kh, kw};
  RecurrentUnit<float> unit(spec, rng);
  Tensor<float> x(Shape(channels, dy, dx));
  for (auto& v : x.mutable_vec()) v = float(rng.uniform(-1.0, 1.0));
  Context<float> ctx;
  ctx.count_macs = true;
  UnitState<float> state = unit.initial_state(dy, dx);
  unit.forward(ctx, x, state);
  return measured_macs(ctx);
}

}  // namespace vseg
