#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vseg/checkpoint.hpp"
#include "vseg/dataset.hpp"
#include "vseg/flops.hpp"
#include "vseg/metrics.hpp"
#include "vseg/segnet.hpp"
#include "vseg/weather.hpp"

namespace vseg {

struct TrainConfig {
  NetworkConfig net;
  double initial_lr = 1e-5;
  int total_iters = 5000;
  double poly_power = 0.9;
  double clip_norm = 5.0;
  int batch = 1;
  std::uint64_t seed = 1;
  int repetitions = 5;
  bool augment_geometric = true;   // random flip + scale of whole sequences
  bool augment_disturb = true;     // noise / polygons / brightness on random frames
  std::string init_from;           // optional Base checkpoint for backbone warm start

  void validate() const;
};

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json_text(const std::string& text);

// lr = initial_lr * (1 - iter/total_iters)^power
double poly_lr(int iter, const TrainConfig& cfg);

// Adam with bias correction; one state slot per parameter, addressed by
// position in the parameter list.
template <typename T>
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<NamedParam<T>>& params, double lr);
  int steps_taken() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

// Global-norm gradient clipping; returns the pre-clip norm. Gradients are
// unchanged when the norm is within the threshold.
template <typename T>
double clip_gradients(std::vector<NamedParam<T>>& params, double clip_norm);

template <typename T>
Tensor<T> image_to_tensor(const Image& img);

LabelMap argmax_labels(const Tensor<float>& probs);

using TrainLog = std::function<void(int iter, double loss, double lr)>;

// Adam on the cross-entropy of the final frame only, poly schedule, global
// gradient clipping; fully seeded and reproducible at thread count 1.
Network<float> train(const TrainConfig& cfg, const DatasetManifest& manifest,
                     const TrainLog& log = nullptr);

struct EvalOptions {
  bool disturb = false;
  DisturbancePolicy policy = DisturbancePolicy::last_frame_only();
  Disturbance disturbance;
  std::uint64_t seed = 0;
};

MetricsSummary evaluate(const Network<float>& net, const DatasetManifest& manifest,
                        const std::string& split, const EvalOptions& opts = {});

// Per-repetition metrics with mean and standard deviation per metric.
struct RunResult {
  int repetitions = 0;
  std::vector<MetricsSummary> per_repetition;
  MetricsSummary mean;
  MetricsSummary stddev;

  std::string to_json() const;
};

RunResult aggregate_runs(const std::vector<MetricsSummary>& per_repetition);

struct BenchEntry {
  UnitDesign design;
  std::vector<double> times_ms;  // raw, one per repeat
  double median_ms = 0.0;
  std::uint64_t flops = 0;  // analytic unit cost at the benched inputs
};

struct BenchResult {
  int channels = 0, kh = 3, kw = 3, dx = 0, dy = 0, repeats = 0;
  std::vector<BenchEntry> entries;

  std::string to_json() const;
  std::string to_table() const;
};

// Median forward-step time per unit design after warm-up; errors on
// repeats < 3.
BenchResult bench_units(const std::vector<UnitDesign>& designs, int channels, int kernel,
                        int dx, int dy, int repeats);

}  // namespace vseg
