#include "vseg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace vseg {

namespace {

const char* kClassNames[8] = {"background", "circle", "rectangle", "triangle",
                              "diamond",    "cross",  "ellipse",   "ring"};

const float kPalette[8][3] = {
    {0.30f, 0.30f, 0.30f},  // background (unused for shapes)
    {0.85f, 0.20f, 0.20f},  // circle
    {0.20f, 0.75f, 0.25f},  // rectangle
    {0.25f, 0.35f, 0.90f},  // triangle
    {0.90f, 0.80f, 0.20f},  // diamond
    {0.80f, 0.25f, 0.80f},  // cross
    {0.20f, 0.80f, 0.80f},  // ellipse
    {0.95f, 0.55f, 0.15f},  // ring
};

Image make_background(Rng& rng, int h, int w) {
  // static low-frequency value noise, bilinearly upsampled from a coarse grid
  const int gh = 5, gw = 7;
  std::vector<float> grid(std::size_t(3) * gh * gw);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < gh * gw; ++i)
      grid[std::size_t(c) * gh * gw + i] = float(rng.uniform(0.12, 0.42));
  Image bg(3, h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y) {
      const double gy = double(y) / (h - 1) * (gh - 1);
      const int y0 = std::min(int(gy), gh - 2);
      const double fy = gy - y0;
      for (int x = 0; x < w; ++x) {
        const double gx = double(x) / (w - 1) * (gw - 1);
        const int x0 = std::min(int(gx), gw - 2);
        const double fx = gx - x0;
        const float* g = grid.data() + std::size_t(c) * gh * gw;
        const double top = g[y0 * gw + x0] * (1 - fx) + g[y0 * gw + x0 + 1] * fx;
        const double bot = g[(y0 + 1) * gw + x0] * (1 - fx) + g[(y0 + 1) * gw + x0 + 1] * fx;
        bg.at(c, y, x) = float(top * (1 - fy) + bot * fy);
      }
    }
  return bg;
}

}  // namespace

bool shape_contains(const ShapeInstance& s, int frame, double px, double py) {
  const double cx = s.cx + s.vx * frame;
  const double cy = s.cy + s.vy * frame;
  const double dx = px - cx, dy = py - cy;
  const double r = s.size;
  switch (s.class_index) {
    case 1:  // circle
      return dx * dx + dy * dy <= r * r;
    case 2:  // rectangle
      return std::abs(dx) <= r && std::abs(dy) <= r * s.aspect;
    case 3: {  // triangle, apex up
      if (dy < -r || dy > 0.7 * r) return false;
      const double half = (dy + r) / (1.7 * r) * r;  // width grows linearly to the base
      return std::abs(dx) <= half;
    }
    case 4:  // diamond
      return std::abs(dx) / r + std::abs(dy) / r <= 1.0;
    case 5:  // cross
      return (std::abs(dx) <= 0.35 * r && std::abs(dy) <= r) ||
             (std::abs(dy) <= 0.35 * r && std::abs(dx) <= r);
    case 6: {  // ellipse
      const double a = dx / r, b = dy / (r * s.aspect);
      return a * a + b * b <= 1.0;
    }
    case 7: {  // ring
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= (0.55 * r) * (0.55 * r);
    }
    default:
      fail("shape_contains: bad class index");
  }
}

SampleScene make_scene(Rng rng, int k, int t, int h, int w) {
  require(k >= 2 && k <= 8, "make_scene: class count must be in [2,8]");
  require(t >= 1, "make_scene: need at least one frame");
  require(h >= 24 && w >= 24, "make_scene: extents too small for shapes");
  SampleScene scene;
  scene.k = k;
  scene.t = t;
  scene.h = h;
  scene.w = w;
  scene.background = make_background(rng, h, w);

  const double smin = std::min(h, w) / 10.0;
  const double smax = std::min(h, w) / 5.0;
  for (int c = 1; c < k; ++c) {
    ShapeInstance s;
    s.class_index = c;
    s.size = rng.uniform(smin, smax);
    s.aspect = rng.uniform(0.5, 0.9);
    const double speed = rng.uniform(0.3, 1.6);
    const double ang = rng.uniform(0.0, 6.283185307179586);
    s.vx = speed * std::cos(ang);
    s.vy = speed * std::sin(ang);
    for (int c2 = 0; c2 < 3; ++c2) {
      const double jit = rng.uniform(-0.06, 0.06);
      s.color[c2] = float(std::clamp(double(kPalette[c][c2]) + jit, 0.05, 0.98));
    }
    // keep the full shape inside the image across all frames
    const double span = t - 1;
    const double lo_x = s.size + 1 + std::max(0.0, -s.vx * span);
    const double hi_x = w - s.size - 1 - std::max(0.0, s.vx * span);
    const double lo_y = s.size + 1 + std::max(0.0, -s.vy * span);
    const double hi_y = h - s.size - 1 - std::max(0.0, s.vy * span);
    require(hi_x > lo_x && hi_y > lo_y, "make_scene: extents too small for shapes");
    // spread shapes out: keep the best of a few placement attempts
    double best_score = -1e18, best_x = 0, best_y = 0;
    for (int attempt = 0; attempt < 12; ++attempt) {
      const double px = rng.uniform(lo_x, hi_x);
      const double py = rng.uniform(lo_y, hi_y);
      double nearest = 1e9;
      for (const auto& other : scene.shapes) {
        const double ddx = px - other.cx, ddy = py - other.cy;
        nearest = std::min(nearest, std::sqrt(ddx * ddx + ddy * ddy) - other.size - s.size);
      }
      if (nearest > best_score) {
        best_score = nearest;
        best_x = px;
        best_y = py;
      }
    }
    s.cx = best_x;
    s.cy = best_y;
    scene.shapes.push_back(s);
  }
  return scene;
}

Image render_frame(const SampleScene& scene, int frame) {
  Image img = scene.background;
  const std::size_t plane = std::size_t(scene.h) * scene.w;
  for (const auto& s : scene.shapes)
    for (int y = 0; y < scene.h; ++y)
      for (int x = 0; x < scene.w; ++x)
        if (shape_contains(s, frame, x + 0.5, y + 0.5))
          for (int c = 0; c < 3; ++c)
            img.data[c * plane + std::size_t(y) * scene.w + x] = s.color[c];
  return img;
}

LabelMap render_labels(const SampleScene& scene, int frame) {
  LabelMap lab(scene.h, scene.w, 0);
  for (const auto& s : scene.shapes)
    for (int y = 0; y < scene.h; ++y)
      for (int x = 0; x < scene.w; ++x)
        if (shape_contains(s, frame, x + 0.5, y + 0.5))
          lab.at(y, x) = std::uint8_t(s.class_index);
  return lab;
}

LabelMap render_shape_mask(const SampleScene& scene, int shape_idx, int frame) {
  require(shape_idx >= 0 && shape_idx < int(scene.shapes.size()),
          "render_shape_mask: bad shape index");
  LabelMap mask(scene.h, scene.w, 0);
  const auto& s = scene.shapes[std::size_t(shape_idx)];
  for (int y = 0; y < scene.h; ++y)
    for (int x = 0; x < scene.w; ++x)
      if (shape_contains(s, frame, x + 0.5, y + 0.5)) mask.at(y, x) = 1;
  return mask;
}

const std::vector<std::string>& DatasetManifest::split_ids(const std::string& split) const {
  if (split == "train") return train_ids;
  if (split == "val") return val_ids;
  fail("unknown split '" + split + "' (expected train|val)");
}

std::string DatasetManifest::sample_dir(const std::string& split,
                                        const std::string& id) const {
  return root + "/" + split + "/" + id;
}

void write_sample(const std::string& dir, const VideoSample& sample) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < sample.frames.size(); ++i)
    write_ppm(dir + "/frame_" + std::to_string(i) + ".ppm", sample.frames[i]);
  write_pgm(dir + "/label.pgm", sample.label);
}

VideoSample read_sample(const std::string& dir, int t, int num_classes) {
  VideoSample s;
  s.id = fs::path(dir).filename().string();
  for (int i = 0; i < t; ++i) {
    Image f = read_ppm(dir + "/frame_" + std::to_string(i) + ".ppm");
    if (!s.frames.empty())
      require(f.same_extents(s.frames.front()), "read_sample: frame extent mismatch in " + dir);
    s.frames.push_back(std::move(f));
  }
  s.label = read_pgm(dir + "/label.pgm");
  require(s.label.h == s.frames.front().h && s.label.w == s.frames.front().w,
          "read_sample: label extents do not match frames in " + dir);
  for (std::uint8_t v : s.label.data)
    require(v < num_classes, "read_sample: label value >= class count in " + dir);
  return s;
}

VideoSample load_sample(const DatasetManifest& m, const std::string& split,
                        const std::string& id) {
  VideoSample s = read_sample(m.sample_dir(split, id), m.t, m.num_classes);
  s.id = id;
  return s;
}

void write_manifest(const DatasetManifest& m) {
  json j;
  j["num_classes"] = m.num_classes;
  j["t"] = m.t;
  j["height"] = m.height;
  j["width"] = m.width;
  j["seed"] = m.seed;
  j["class_names"] = m.class_names;
  j["splits"]["train"] = m.train_ids;
  j["splits"]["val"] = m.val_ids;
  std::ofstream out(m.root + "/manifest.json");
  require(out.good(), "write_manifest: cannot open " + m.root + "/manifest.json");
  out << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::string& root) {
  std::ifstream in(root + "/manifest.json");
  require(in.good(), "read_manifest: cannot open " + root + "/manifest.json");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail("read_manifest: invalid JSON in " + root + "/manifest.json: " + e.what());
  }
  DatasetManifest m;
  m.root = root;
  m.num_classes = j.at("num_classes").get<int>();
  m.t = j.at("t").get<int>();
  m.height = j.at("height").get<int>();
  m.width = j.at("width").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  m.train_ids = j.at("splits").at("train").get<std::vector<std::string>>();
  m.val_ids = j.at("splits").at("val").get<std::vector<std::string>>();
  for (const auto& id : m.train_ids)
    require(fs::exists(m.sample_dir("train", id)), "read_manifest: missing sample " + id);
  for (const auto& id : m.val_ids)
    require(fs::exists(m.sample_dir("val", id)), "read_manifest: missing sample " + id);
  return m;
}

namespace {

std::string sample_name(int idx) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", idx);
  return buf;
}

}  // namespace

DatasetManifest generate_dataset(const std::string& root, std::uint64_t seed, int n_train,
                                 int n_val, int k, int t, int h, int w) {
  require(n_train >= 1 && n_val >= 1, "generate_dataset: empty split");
  DatasetManifest m;
  m.root = root;
  m.num_classes = k;
  m.t = t;
  m.height = h;
  m.width = w;
  m.seed = seed;
  for (int c = 0; c < k; ++c) m.class_names.push_back(kClassNames[c]);

  Rng rng(seed);
  fs::create_directories(root);
  int global = 0;
  for (const std::string split : {"train", "val"}) {
    const int count = split == "train" ? n_train : n_val;
    for (int i = 0; i < count; ++i, ++global) {
      SampleScene scene = make_scene(rng.fork(std::uint64_t(global)), k, t, h, w);
      VideoSample s;
      s.id = sample_name(i);
      for (int f = 0; f < t; ++f) s.frames.push_back(render_frame(scene, f));
      s.label = render_labels(scene, t - 1);
      write_sample(m.sample_dir(split, s.id), s);
      if (split == "train")
        m.train_ids.push_back(s.id);
      else
        m.val_ids.push_back(s.id);
    }
  }
  write_manifest(m);
  return m;
}

BatchIterator::BatchIterator(const DatasetManifest& manifest, const std::string& split,
                             int batch, std::uint64_t seed)
    : manifest_(&manifest), split_(split), batch_(batch), seed_(seed) {
  require(batch >= 1, "BatchIterator: batch must be >= 1");
  order_ = manifest.split_ids(split);  // validates the split name
  require(!order_.empty(), "BatchIterator: split '" + split + "' is empty");
  reshuffle();
}

void BatchIterator::reshuffle() {
  ++epoch_;
  cursor_ = 0;
  Rng rng(splitmix64(seed_ ^ splitmix64(std::uint64_t(epoch_) + 0x9e37)));
  std::sort(order_.begin(), order_.end());
  for (std::size_t i = order_.size(); i > 1; --i)
    std::swap(order_[i - 1], order_[std::size_t(rng.uniform_int(int(i)))]);
}

std::vector<std::string> BatchIterator::next_ids() {
  if (cursor_ >= order_.size()) reshuffle();
  std::vector<std::string> ids;
  for (int b = 0; b < batch_ && cursor_ < order_.size(); ++b, ++cursor_)
    ids.push_back(order_[cursor_]);
  return ids;
}

std::vector<VideoSample> BatchIterator::next() {
  std::vector<VideoSample> out;
  for (const auto& id : next_ids()) out.push_back(load_sample(*manifest_, split_, id));
  return out;
}

}  // namespace vseg
