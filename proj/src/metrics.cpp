#include "vseg/metrics.hpp"

#include <sstream>

namespace vseg {

ConfusionMatrix::ConfusionMatrix(int num_classes) : k_(num_classes) {
  require(num_classes >= 1, "ConfusionMatrix: need at least one class");
  counts_.assign(std::size_t(k_) * k_, 0);
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto v : counts_) t += v;
  return t;
}

void ConfusionMatrix::accumulate(const LabelMap& pred, const LabelMap& gt,
                                 int ignore_index) {
  require(pred.h == gt.h && pred.w == gt.w, "ConfusionMatrix: extent mismatch");
  const std::size_t n = gt.data.size();
  for (std::size_t i = 0; i < n; ++i) {
    const int g = gt.data[i], p = pred.data[i];
    if (g == ignore_index) continue;
    require(g < k_ && p < k_, "ConfusionMatrix: class index out of range");
    ++counts_[std::size_t(g) * k_ + p];
  }
}

void ConfusionMatrix::add(const ConfusionMatrix& other) {
  require(other.k_ == k_, "ConfusionMatrix: class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

double pixel_accuracy(const ConfusionMatrix& cm) {
  const std::uint64_t t = cm.total();
  require(t > 0, "pixel_accuracy: empty confusion matrix");
  std::uint64_t diag = 0;
  for (int k = 0; k < cm.num_classes(); ++k) diag += cm.at(k, k);
  return double(diag) / double(t);
}

IouReport mean_iou(const ConfusionMatrix& cm) {
  require(cm.total() > 0, "mean_iou: empty confusion matrix");
  const int K = cm.num_classes();
  IouReport rep;
  rep.per_class.assign(std::size_t(K), 0.0);
  rep.valid.assign(std::size_t(K), false);
  double sum = 0.0;
  int used = 0;
  for (int k = 0; k < K; ++k) {
    std::uint64_t row = 0, col = 0;
    for (int j = 0; j < K; ++j) {
      row += cm.at(k, j);
      col += cm.at(j, k);
    }
    const std::uint64_t uni = row + col - cm.at(k, k);
    if (uni == 0) continue;  // absent from both gt and pred
    const double iou = double(cm.at(k, k)) / double(uni);
    rep.per_class[std::size_t(k)] = iou;
    rep.valid[std::size_t(k)] = true;
    sum += iou;
    ++used;
  }
  rep.mean_iou = used > 0 ? sum / used : 0.0;
  return rep;
}

FlickerReport mfip(const std::vector<LabelMap>& seq) {
  require(seq.size() >= 2, "mfip: need at least 2 frames");
  FlickerReport rep;
  for (std::size_t t = 1; t < seq.size(); ++t) {
    const LabelMap& a = seq[t - 1];
    const LabelMap& b = seq[t];
    require(a.h == b.h && a.w == b.w, "mfip: frame extent mismatch");
    std::uint64_t changed = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
      if (a.data[i] != b.data[i]) ++changed;
    rep.pair_fractions.push_back(double(changed) / double(a.data.size()));
  }
  rep.frame_pairs = int(rep.pair_fractions.size());
  double s = 0.0;
  for (double f : rep.pair_fractions) s += f;
  rep.mfip_percent = 100.0 * s / double(rep.frame_pairs);
  return rep;
}

std::string MetricsSummary::to_json() const {
  std::ostringstream os;
  os.precision(10);
  os << "{\"accuracy\":" << accuracy << ",\"mIoU\":" << mean_iou << ",\"per_class_iou\":[";
  for (std::size_t i = 0; i < per_class_iou.size(); ++i) {
    if (i) os << ",";
    os << per_class_iou[i];
  }
  os << "],\"mFIP_percent\":" << mfip_percent << "}";
  return os.str();
}

}  // namespace vseg
