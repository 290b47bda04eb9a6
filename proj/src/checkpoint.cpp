#include "vseg/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include <json.hpp>

using nlohmann::json;

namespace vseg {

namespace {

constexpr char kMagic[] = "VSEGCKPT1\n";
constexpr std::size_t kMagicLen = 10;

json network_config_json(const NetworkConfig& cfg) {
  json j;
  j["num_classes"] = cfg.num_classes;
  j["base_channels"] = cfg.base_channels;
  j["branch_depths"] = {cfg.branch_depths[0], cfg.branch_depths[1], cfg.branch_depths[2]};
  j["height"] = cfg.height;
  j["width"] = cfg.width;
  j["version"] = net_version_name(cfg.version);
  j["unit_design"] = unit_design_name(cfg.unit_design);
  j["kernel"] = cfg.kernel;
  return j;
}

NetworkConfig network_config_from(const json& j) {
  NetworkConfig cfg;
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.base_channels = j.at("base_channels").get<int>();
  const auto d = j.at("branch_depths").get<std::vector<int>>();
  require(d.size() == 3, "network config: branch_depths must have 3 entries");
  cfg.branch_depths = {d[0], d[1], d[2]};
  cfg.height = j.at("height").get<int>();
  cfg.width = j.at("width").get<int>();
  cfg.version = net_version_from_name(j.at("version").get<std::string>());
  cfg.unit_design = unit_design_from_name(j.at("unit_design").get<std::string>());
  cfg.kernel = j.value("kernel", 3);
  return cfg;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

std::string network_config_to_json(const NetworkConfig& cfg) {
  return network_config_json(cfg).dump();
}

NetworkConfig network_config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("network config: invalid JSON: ") + e.what());
  }
  return network_config_from(j);
}

std::uint64_t config_hash(const NetworkConfig& cfg) {
  return fnv1a(network_config_to_json(cfg));
}

void save_checkpoint(const std::string& path, const Network<float>& net) {
  std::vector<std::pair<std::string, Tensor<float>>> sorted;
  for (const auto& p : net.params()) sorted.push_back({p.name, p.tensor});
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  json header;
  header["config"] = network_config_json(net.config());
  header["config_hash"] = config_hash(net.config());
  json names = json::array();
  for (const auto& [name, t] : sorted) {
    const Shape& s = t.shape();
    names.push_back({{"name", name}, {"shape", {s.n, s.c, s.h, s.w}}});
  }
  header["params"] = names;
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  require(out.good(), "save_checkpoint: cannot open " + path);
  out.write(kMagic, std::streamsize(kMagicLen));
  const std::uint64_t hlen = htext.size();
  char lenbuf[8];
  for (int i = 0; i < 8; ++i) lenbuf[i] = char((hlen >> (8 * i)) & 0xff);
  out.write(lenbuf, 8);
  out.write(htext.data(), std::streamsize(htext.size()));
  static_assert(sizeof(float) == 4);
  for (const auto& [name, t] : sorted)
    out.write(reinterpret_cast<const char*>(t.data()),
              std::streamsize(std::size_t(t.numel()) * 4));
  require(out.good(), "save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "load_checkpoint: cannot open " + path);
  char magic[kMagicLen];
  in.read(magic, std::streamsize(kMagicLen));
  require(in.gcount() == std::streamsize(kMagicLen) &&
              std::memcmp(magic, kMagic, kMagicLen) == 0,
          "load_checkpoint: bad magic in " + path);
  char lenbuf[8];
  in.read(lenbuf, 8);
  require(in.gcount() == 8, "load_checkpoint: truncated header length in " + path);
  std::uint64_t hlen = 0;
  for (int i = 0; i < 8; ++i) hlen |= std::uint64_t(std::uint8_t(lenbuf[i])) << (8 * i);
  std::string htext(hlen, '\0');
  in.read(htext.data(), std::streamsize(hlen));
  require(in.gcount() == std::streamsize(hlen), "load_checkpoint: truncated header in " + path);

  json header;
  try {
    header = json::parse(htext);
  } catch (const json::exception& e) {
    fail("load_checkpoint: invalid header JSON in " + path + ": " + e.what());
  }
  Checkpoint ckpt;
  ckpt.config = network_config_from(header.at("config"));
  ckpt.config_hash = header.at("config_hash").get<std::uint64_t>();
  for (const auto& entry : header.at("params")) {
    const std::string name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<int>>();
    require(shape.size() == 4, "load_checkpoint: bad shape entry in " + path);
    const std::size_t numel =
        std::size_t(shape[0]) * shape[1] * std::size_t(shape[2]) * shape[3];
    std::vector<float> data(numel);
    in.read(reinterpret_cast<char*>(data.data()), std::streamsize(numel * 4));
    require(in.gcount() == std::streamsize(numel * 4),
            "load_checkpoint: truncated payload in " + path);
    ckpt.params.push_back({name, std::move(data)});
  }
  return ckpt;
}

void load_into_network(const Checkpoint& ckpt, Network<float>& net, bool strict) {
  if (strict)
    require(ckpt.config_hash == config_hash(net.config()),
            "checkpoint/config mismatch: checkpoint was written for a different network");
  std::size_t loaded = 0;
  for (auto& p : net.params()) {
    const auto it = std::find_if(ckpt.params.begin(), ckpt.params.end(),
                                 [&](const auto& e) { return e.first == p.name; });
    const bool is_unit = p.name.rfind("unit_", 0) == 0;
    if (it == ckpt.params.end() || (!strict && is_unit)) {
      require(!strict, "checkpoint/config mismatch: missing parameter " + p.name);
      continue;  // warm start: recurrent-unit parameters stay freshly initialized
    }
    require(it->second.size() == std::size_t(p.tensor.numel()),
            "checkpoint/config mismatch: shape of " + p.name + " differs");
    std::copy(it->second.begin(), it->second.end(), p.tensor.mutable_vec().begin());
    ++loaded;
  }
  require(loaded > 0, "load_into_network: no parameters matched the checkpoint");
}

}  // namespace vseg
