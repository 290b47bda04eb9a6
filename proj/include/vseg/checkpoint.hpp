#pragma once

#include <string>
#include <vector>

#include "vseg/segnet.hpp"

namespace vseg {

// Checkpoint layout: magic "VSEGCKPT1\n", u64-LE header length, JSON header
// (network config, config hash, parameter names + shapes), then one raw
// little-endian f32 payload per parameter, ordered by name.
struct Checkpoint {
  NetworkConfig config;
  std::uint64_t config_hash = 0;
  std::vector<std::pair<std::string, std::vector<float>>> params;  // name-sorted
};

std::string network_config_to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json_text(const std::string& text);
std::uint64_t config_hash(const NetworkConfig& cfg);

void save_checkpoint(const std::string& path, const Network<float>& net);
Checkpoint load_checkpoint(const std::string& path);

// strict: config hash and every parameter must match (evaluation).
// lenient: loads backbone parameters by name intersection and leaves
// recurrent-unit parameters ("unit_*") freshly initialized (warm start).
void load_into_network(const Checkpoint& ckpt, Network<float>& net, bool strict);

}  // namespace vseg
