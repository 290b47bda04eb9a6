#pragma once

#include <string>
#include <vector>

#include "vseg/image.hpp"

namespace vseg {

// One moving shape: class index, motion model and appearance. Shapes are
// rendered in class order, higher class index on top.
struct ShapeInstance {
  int class_index = 0;
  double cx = 0, cy = 0;  // center at frame 0
  double vx = 0, vy = 0;  // constant per-sample velocity, pixels per frame
  double size = 0;
  double aspect = 1.0;
  float color[3] = {0, 0, 0};
};

// Deterministic description of one video sample: a static textured
// background plus K-1 moving shapes.
struct SampleScene {
  int k = 0, t = 0, h = 0, w = 0;
  Image background;
  std::vector<ShapeInstance> shapes;
};

SampleScene make_scene(Rng rng, int k, int t, int h, int w);
Image render_frame(const SampleScene& scene, int frame);
LabelMap render_labels(const SampleScene& scene, int frame);
// single-shape occupancy mask (1 inside, 0 outside), ignoring occlusion
LabelMap render_shape_mask(const SampleScene& scene, int shape_idx, int frame);

bool shape_contains(const ShapeInstance& s, int frame, double px, double py);

// Ordered frames plus one label map aligned to the final frame.
struct VideoSample {
  std::string id;
  std::vector<Image> frames;
  LabelMap label;
};

struct DatasetManifest {
  std::string root;
  int num_classes = 0;
  int t = 0;
  int height = 0, width = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> class_names;
  std::vector<std::string> train_ids, val_ids;

  const std::vector<std::string>& split_ids(const std::string& split) const;
  std::string sample_dir(const std::string& split, const std::string& id) const;
};

// Renders and writes the full dataset tree:
//   <root>/manifest.json
//   <root>/<split>/<id>/frame_{0..T-1}.ppm
//   <root>/<split>/<id>/label.pgm
DatasetManifest generate_dataset(const std::string& root, std::uint64_t seed, int n_train,
                                 int n_val, int k, int t, int h, int w);

DatasetManifest read_manifest(const std::string& root);
void write_manifest(const DatasetManifest& m);

void write_sample(const std::string& dir, const VideoSample& sample);
VideoSample read_sample(const std::string& dir, int t, int num_classes);
VideoSample load_sample(const DatasetManifest& m, const std::string& split,
                        const std::string& id);

// Seeded shuffle per epoch, partial final batch allowed.
class BatchIterator {
 public:
  BatchIterator(const DatasetManifest& manifest, const std::string& split, int batch,
                std::uint64_t seed);

  // ids of the next batch; reshuffles with a derived seed at epoch boundaries
  std::vector<std::string> next_ids();
  // loads the corresponding samples
  std::vector<VideoSample> next();

  int epoch() const { return epoch_; }
  std::size_t epoch_size() const { return order_.size(); }

 private:
  void reshuffle();

  const DatasetManifest* manifest_;
  std::string split_;
  int batch_;
  std::uint64_t seed_;
  int epoch_ = -1;
  std::size_t cursor_ = 0;
  std::vector<std::string> order_;
};

}  // namespace vseg
