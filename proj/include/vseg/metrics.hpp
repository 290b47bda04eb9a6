#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vseg/image.hpp"

namespace vseg {

// K x K pixel counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  int num_classes() const { return k_; }
  std::uint64_t at(int gt, int pred) const { return counts_[std::size_t(gt) * k_ + pred]; }
  std::uint64_t total() const;

  // ignore_index < 0 disables the ignore label (the default; synthetic labels
  // are complete)
  void accumulate(const LabelMap& pred, const LabelMap& gt, int ignore_index = -1);
  void add(const ConfusionMatrix& other);

 private:
  int k_;
  std::vector<std::uint64_t> counts_;
};

struct IouReport {
  double mean_iou = 0.0;
  std::vector<double> per_class;   // NaN-free; invalid classes hold 0 and valid=false
  std::vector<bool> valid;         // class present in gt or pred
};

double pixel_accuracy(const ConfusionMatrix& cm);

// IoU_k = cm[k][k] / (row_k + col_k - cm[k][k]); classes absent from both gt
// and pred are excluded from the mean.
IouReport mean_iou(const ConfusionMatrix& cm);

// Per consecutive-frame-pair fraction of pixels whose predicted class
// changed; the mean is reported in percent.
struct FlickerReport {
  std::vector<double> pair_fractions;
  double mfip_percent = 0.0;
  int frame_pairs = 0;
};

FlickerReport mfip(const std::vector<LabelMap>& pred_sequence);

struct MetricsSummary {
  double accuracy = 0.0;
  double mean_iou = 0.0;
  std::vector<double> per_class_iou;
  double mfip_percent = 0.0;

  std::string to_json() const;
};

}  // namespace vseg
