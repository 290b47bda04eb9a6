#include <doctest.h>

#include <cmath>

#include "vseg/flops.hpp"
#include "vseg/segnet.hpp"

using namespace vseg;

namespace {

double pct(double ratio, int decimals) {
  double s = 1;
  for (int i = 0; i < decimals; ++i) s *= 10;
  return std::round(ratio * 100.0 * s) / s;
}

}  // namespace

TEST_CASE("unit cost absolutes at the reference configuration") {
  UnitCostInputs c{128, 128, 3, 3, 1, 1};
  CHECK(flops_standard_unit(c) == 2364032ull);
  CHECK(flops_fast_unit(c) == 1198400ull);
  CHECK(flops_faster_unit(c) == 44352ull);

  UnitCostInputs tiny{1, 1, 1, 1, 1, 1};
  CHECK(flops_standard_unit(tiny) == 53ull);  // (16 + 37) * 1

  UnitCostInputs bad{0, 4, 3, 3, 1, 1};
  CHECK_THROWS(flops_standard_unit(bad));
  UnitCostInputs odd{4, 3, 3, 3, 1, 1};
  CHECK_THROWS(flops_fast_unit(odd));
  CHECK_THROWS(flops_faster_unit(odd));
}

TEST_CASE("published ratios hold for any feature-map size") {
  for (auto [dx, dy] : {std::pair{1, 1}, {64, 64}, {7, 13}, {2048, 1024}}) {
    UnitCostInputs c{128, 128, 3, 3, dx, dy};
    const double std_f = double(flops_standard_unit(c));
    const double fast_f = double(flops_fast_unit(c));
    const double faster_f = double(flops_faster_unit(c));
    CHECK(pct(faster_f / std_f, 2) == 1.88);
    CHECK(pct(faster_f / fast_f, 2) == 3.70);
    CHECK(pct(fast_f / std_f, 1) == 50.7);
  }
}

TEST_CASE("formulas are exactly linear in Dx*Dy") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::int64_t i = 2 * (1 + rng.uniform_int(64));
    const std::int64_t k = 1 + 2 * rng.uniform_int(3);
    const std::int64_t dx = 1 + rng.uniform_int(64);
    const std::int64_t dy = 1 + rng.uniform_int(64);
    UnitCostInputs unit{i, i, k, k, 1, 1};
    UnitCostInputs big{i, i, k, k, dx, dy};
    for (UnitDesign d : {UnitDesign::Standard, UnitDesign::Fast, UnitDesign::Faster}) {
      CHECK(flops_unit(d, big) == flops_unit(d, unit) * std::uint64_t(dx) * std::uint64_t(dy));
    }
    // doubling Dx doubles the count
    UnitCostInputs dbl{i, i, k, k, 2 * dx, dy};
    CHECK(flops_unit(UnitDesign::Standard, dbl) == 2 * flops_unit(UnitDesign::Standard, big));
  }
}

TEST_CASE("faster < fast < standard over a grid of valid inputs") {
  for (std::int64_t i = 4; i <= 256; i *= 2)
    for (std::int64_t k : {3, 5, 7})
      for (std::int64_t d : {1, 16}) {
        UnitCostInputs c{i, i, k, k, d, d};
        CHECK(flops_faster_unit(c) < flops_fast_unit(c));
        CHECK(flops_fast_unit(c) < flops_standard_unit(c));
      }
}

TEST_CASE("instrumented conv MACs match the formulas' conv terms bit-exactly") {
  for (auto [ch, dxy] : {std::pair{16, 8}, {8, 4}, {12, 6}}) {
    UnitCostInputs c{ch, ch, 3, 3, dxy, dxy};
    for (UnitDesign d : {UnitDesign::Standard, UnitDesign::Fast, UnitDesign::Faster}) {
      CAPTURE(unit_design_name(d));
      const std::uint64_t macs = measure_unit_macs(d, ch, 3, 3, dxy, dxy);
      CHECK(2 * macs == conv_flops_unit(d, c));
    }
  }
}

TEST_CASE("measured_macs requires instrumentation") {
  Context<float> ctx;
  CHECK_THROWS(measured_macs(ctx));
  ctx.count_macs = true;
  CHECK(measured_macs(ctx) == 0);
}

TEST_CASE("network cost report aggregates placements per version") {
  NetworkConfig cfg;
  cfg.num_classes = 8;
  cfg.base_channels = 16;
  cfg.height = 64;
  cfg.width = 128;

  NetworkConfig base = cfg;
  base.version = NetVersion::Base;
  CHECK(version_cost_report(base, UnitDesign::Standard).total == 0);

  NetworkConfig v2 = cfg, v5 = cfg, v6 = cfg;
  v2.version = NetVersion::V2;
  v5.version = NetVersion::V5;
  v6.version = NetVersion::V6;
  for (UnitDesign d : {UnitDesign::Standard, UnitDesign::Fast, UnitDesign::Faster}) {
    const auto r2 = version_cost_report(v2, d);
    const auto r5 = version_cost_report(v5, d);
    const auto r6 = version_cost_report(v6, d);
    CHECK(r2.placements.size() == 1);
    CHECK(r5.placements.size() == 3);
    CHECK(r6.placements.size() == 4);
    CHECK(r6.total == r2.total + r5.total);  // v6 is the placement union
  }
  CHECK(version_cost_report(v5, UnitDesign::Faster).total <
        version_cost_report(v5, UnitDesign::Fast).total);
  CHECK(version_cost_report(v5, UnitDesign::Fast).total <
        version_cost_report(v5, UnitDesign::Standard).total);

  const NetworkCostReport all = network_cost_report(cfg);
  CHECK(all.variants.size() == 10);  // base + 3 versions x 3 designs
  CHECK(all.to_json().find("\"ratios\"") != std::string::npos);
}
