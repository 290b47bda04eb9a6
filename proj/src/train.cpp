#include "vseg/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include <json.hpp>

using nlohmann::json;

namespace vseg {

void TrainConfig::validate() const {
  net.validate();
  require(initial_lr > 0.0, "train config: initial_lr must be positive");
  require(total_iters >= 1, "train config: total_iters must be >= 1");
  require(poly_power > 0.0, "train config: poly power must be positive");
  require(clip_norm > 0.0, "train config: clip_norm must be positive");
  require(batch >= 1, "train config: batch must be >= 1");
  require(repetitions >= 1, "train config: repetitions must be >= 1");
}

std::string train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["network"] = json::parse(network_config_to_json(cfg.net));
  j["initial_lr"] = cfg.initial_lr;
  j["total_iters"] = cfg.total_iters;
  j["poly_power"] = cfg.poly_power;
  j["clip_norm"] = cfg.clip_norm;
  j["batch"] = cfg.batch;
  j["seed"] = cfg.seed;
  j["repetitions"] = cfg.repetitions;
  j["augment_geometric"] = cfg.augment_geometric;
  j["augment_disturb"] = cfg.augment_disturb;
  j["init_from"] = cfg.init_from;
  return j.dump(2);
}

TrainConfig train_config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("train config: invalid JSON: ") + e.what());
  }
  TrainConfig cfg;
  if (j.contains("network"))
    cfg.net = network_config_from_json_text(j.at("network").dump());
  cfg.initial_lr = j.value("initial_lr", cfg.initial_lr);
  cfg.total_iters = j.value("total_iters", cfg.total_iters);
  cfg.poly_power = j.value("poly_power", cfg.poly_power);
  cfg.clip_norm = j.value("clip_norm", cfg.clip_norm);
  cfg.batch = j.value("batch", cfg.batch);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.repetitions = j.value("repetitions", cfg.repetitions);
  cfg.augment_geometric = j.value("augment_geometric", cfg.augment_geometric);
  cfg.augment_disturb = j.value("augment_disturb", cfg.augment_disturb);
  cfg.init_from = j.value("init_from", cfg.init_from);
  return cfg;
}

double poly_lr(int iter, const TrainConfig& cfg) {
  require(iter >= 0, "poly_lr: negative iteration");
  require(iter <= cfg.total_iters, "poly_lr: iteration beyond total_iters");
  return cfg.initial_lr * std::pow(1.0 - double(iter) / cfg.total_iters, cfg.poly_power);
}

template <typename T>
void Adam<T>::step(std::vector<NamedParam<T>>& params, double lr) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(std::size_t(params[i].tensor.numel()), T(0));
      v_[i].assign(std::size_t(params[i].tensor.numel()), T(0));
    }
  }
  require(m_.size() == params.size(), "Adam: parameter list changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = params[i].tensor;
    if (!t.has_grad()) continue;
    const std::vector<T>& g = t.grad();
    T* p = t.mutable_data();
    T* m = m_[i].data();
    T* v = v_[i].data();
    const std::size_t n = g.size();
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = T(beta1_) * m[j] + T(1.0 - beta1_) * g[j];
      v[j] = T(beta2_) * v[j] + T(1.0 - beta2_) * g[j] * g[j];
      const double mhat = double(m[j]) / bc1;
      const double vhat = double(v[j]) / bc2;
      p[j] -= T(lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

template <typename T>
double clip_gradients(std::vector<NamedParam<T>>& params, double clip_norm) {
  require(clip_norm > 0.0, "clip_gradients: clip_norm must be positive");
  double sq = 0.0;
  for (const auto& p : params)
    if (p.tensor.has_grad())
      for (const T& g : p.tensor.grad()) sq += double(g) * double(g);
  const double norm = std::sqrt(sq);
  if (norm > clip_norm) {
    const T s = T(clip_norm / norm);
    for (auto& p : params)
      if (p.tensor.has_grad())
        for (T& g : p.tensor.mutable_grad()) g *= s;
  }
  return norm;
}

template <typename T>
Tensor<T> image_to_tensor(const Image& img) {
  Tensor<T> t(Shape(img.c, img.h, img.w));
  for (std::size_t i = 0; i < img.data.size(); ++i) t.mutable_data()[i] = T(img.data[i]);
  return t;
}

LabelMap argmax_labels(const Tensor<float>& probs) {
  const Shape& s = probs.shape();
  LabelMap out(s.h, s.w);
  const std::size_t plane = std::size_t(s.h) * s.w;
  for (std::size_t p = 0; p < plane; ++p) {
    int best = 0;
    float bv = probs.data()[p];
    for (int c = 1; c < s.c; ++c) {
      const float v = probs.data()[std::size_t(c) * plane + p];
      if (v > bv) {
        bv = v;
        best = c;
      }
    }
    out.data[p] = std::uint8_t(best);
  }
  return out;
}

namespace {

std::uint64_t rng_key(int iter, const std::string& id) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : id) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return splitmix64(h ^ (std::uint64_t(iter) << 20));
}

// training-time disturbance draw, mirroring the advanced augmentation recipe:
// one of {gaussian, salt&pepper, polygon, brightness} applied to one frame,
// a random subset, or every frame
VideoSample augment_sample(const VideoSample& s, bool geometric, bool disturb, Rng rng) {
  VideoSample out = s;
  if (geometric) {
    GeometricAugment g;
    g.flip = rng.bernoulli(0.5);
    g.scaled = rng.bernoulli(0.5);
    g.scale = rng.uniform(0.75, 1.25);
    out = apply_geometric(out, g);
  }
  if (disturb && rng.bernoulli(0.5)) {
    Disturbance d;
    switch (rng.uniform_int(4)) {
      case 0:
        d.kind = Disturbance::Kind::Gaussian;
        d.amount = rng.uniform(0.02, 0.15);
        break;
      case 1:
        d.kind = Disturbance::Kind::SaltPepper;
        d.amount = rng.uniform(0.01, 0.10);
        break;
      case 2:
        d.kind = Disturbance::Kind::Polygon;
        d.max_vertices = 6;
        d.extent_fraction = rng.uniform(0.02, 0.20);
        break;
      default:
        d.kind = Disturbance::Kind::Brightness;
        d.amount = rng.uniform(0.25, 0.95);
        break;
    }
    DisturbancePolicy policy;
    switch (rng.uniform_int(3)) {
      case 0: {
        // one random frame
        const int t = int(out.frames.size());
        const int pick = rng.uniform_int(t);
        VideoSample one = out;
        one.frames = {out.frames[std::size_t(pick)]};
        one = apply_policy(one, DisturbancePolicy::all_frames(), d, rng.next_u64());
        out.frames[std::size_t(pick)] = one.frames[0];
        return out;
      }
      case 1: policy = DisturbancePolicy::random_subset(0.5); break;
      default: policy = DisturbancePolicy::all_frames(); break;
    }
    out = apply_policy(out, policy, d, rng.next_u64());
  }
  return out;
}

}  // namespace

Network<float> train(const TrainConfig& cfg, const DatasetManifest& manifest,
                     const TrainLog& log) {
  cfg.validate();
  require(manifest.num_classes == cfg.net.num_classes,
          "train: dataset class count (" + std::to_string(manifest.num_classes) +
              ") does not match network config (" + std::to_string(cfg.net.num_classes) + ")");
  require(manifest.height == cfg.net.height && manifest.width == cfg.net.width,
          "train: dataset extents do not match network config");

  Rng rng(cfg.seed);
  Network<float> net(cfg.net, rng.fork(1).seed());
  if (!cfg.init_from.empty())
    load_into_network(load_checkpoint(cfg.init_from), net, /*strict=*/false);

  // the dataset is desk-scale; keep decoded samples in memory
  std::map<std::string, VideoSample> cache;
  for (const auto& id : manifest.train_ids) cache[id] = load_sample(manifest, "train", id);

  BatchIterator batches(manifest, "train", cfg.batch, rng.fork(2).seed());
  Rng aug_rng = rng.fork(3);
  Adam<float> adam;
  Tape<float> tape;

  for (int iter = 0; iter < cfg.total_iters; ++iter) {
    const auto ids = batches.next_ids();
    tape.reset();
    Context<float> ctx;
    ctx.tape = &tape;

    Tensor<float> loss;
    for (const auto& id : ids) {
      VideoSample sample = augment_sample(cache.at(id), cfg.augment_geometric,
                                          cfg.augment_disturb, aug_rng.fork(rng_key(iter, id)));
      std::vector<Tensor<float>> frames;
      frames.reserve(sample.frames.size());
      for (const auto& f : sample.frames) frames.push_back(image_to_tensor<float>(f));
      auto [probs, state] = net.forward_sequence(ctx, frames);
      Tensor<float> l = nll_loss(ctx, probs, sample.label.data);
      loss = loss.defined() ? add(ctx, loss, l) : l;
    }
    if (ids.size() > 1) loss = scale(ctx, loss, 1.0f / float(ids.size()));

    if (!std::isfinite(double(loss.item())))
      fail("train: NaN/Inf loss at iteration " + std::to_string(iter));

    tape.backward(loss);
    clip_gradients(net.params(), cfg.clip_norm);
    const double lr = poly_lr(iter, cfg);
    adam.step(net.params(), lr);
    if (log) log(iter, double(loss.item()), lr);
  }
  return net;
}

MetricsSummary evaluate(const Network<float>& net, const DatasetManifest& manifest,
                        const std::string& split, const EvalOptions& opts) {
  require(manifest.num_classes == net.config().num_classes,
          "evaluate: dataset class count does not match the checkpointed network");
  const auto& ids = manifest.split_ids(split);
  require(!ids.empty(), "evaluate: empty split");

  ConfusionMatrix cm(net.config().num_classes);
  double mfip_sum = 0.0;
  std::uint64_t sample_idx = 0;
  for (const auto& id : ids) {
    VideoSample sample = load_sample(manifest, split, id);
    if (opts.disturb)
      sample = apply_policy(sample, opts.policy, opts.disturbance,
                            splitmix64(opts.seed ^ splitmix64(sample_idx + 1)));
    ++sample_idx;

    Context<float> ctx;
    std::vector<Tensor<float>> frames;
    for (const auto& f : sample.frames) frames.push_back(image_to_tensor<float>(f));
    const std::vector<Tensor<float>> probs = net.forward_sequence_all(ctx, frames);

    std::vector<LabelMap> preds;
    preds.reserve(probs.size());
    for (const auto& p : probs) preds.push_back(argmax_labels(p));
    cm.accumulate(preds.back(), sample.label);
    if (preds.size() >= 2) mfip_sum += mfip(preds).mfip_percent;
  }

  MetricsSummary out;
  out.accuracy = pixel_accuracy(cm);
  const IouReport iou = mean_iou(cm);
  out.mean_iou = iou.mean_iou;
  out.per_class_iou = iou.per_class;
  out.mfip_percent = mfip_sum / double(ids.size());
  return out;
}

RunResult aggregate_runs(const std::vector<MetricsSummary>& per_repetition) {
  require(!per_repetition.empty(), "aggregate_runs: no repetitions");
  RunResult r;
  r.repetitions = int(per_repetition.size());
  r.per_repetition = per_repetition;
  const double n = double(per_repetition.size());
  // shifted-data moments: identical repetitions give exactly zero deviation
  auto stats = [&](auto get, double& mean, double& sd) {
    const double x0 = get(per_repetition.front());
    double s = 0;
    for (const auto& m : per_repetition) s += get(m) - x0;
    const double shifted_mean = s / n;
    double sq = 0;
    for (const auto& m : per_repetition) {
      const double d = (get(m) - x0) - shifted_mean;
      sq += d * d;
    }
    mean = x0 + shifted_mean;
    sd = std::sqrt(sq / n);
  };
  auto acc = [](const MetricsSummary& m) { return m.accuracy; };
  auto miou = [](const MetricsSummary& m) { return m.mean_iou; };
  auto flick = [](const MetricsSummary& m) { return m.mfip_percent; };
  stats(acc, r.mean.accuracy, r.stddev.accuracy);
  stats(miou, r.mean.mean_iou, r.stddev.mean_iou);
  stats(flick, r.mean.mfip_percent, r.stddev.mfip_percent);
  return r;
}

std::string RunResult::to_json() const {
  json j;
  j["repetitions"] = repetitions;
  json reps = json::array();
  for (const auto& m : per_repetition) reps.push_back(json::parse(m.to_json()));
  j["per_repetition"] = reps;
  j["mean"] = {{"accuracy", mean.accuracy},
               {"mIoU", mean.mean_iou},
               {"mFIP_percent", mean.mfip_percent}};
  j["stddev"] = {{"accuracy", stddev.accuracy},
                 {"mIoU", stddev.mean_iou},
                 {"mFIP_percent", stddev.mfip_percent}};
  return j.dump(2);
}

BenchResult bench_units(const std::vector<UnitDesign>& designs, int channels, int kernel,
                        int dx, int dy, int repeats) {
  require(repeats >= 3, "bench: repeats must be >= 3");
  BenchResult res;
  res.channels = channels;
  res.kh = res.kw = kernel;
  res.dx = dx;
  res.dy = dy;
  res.repeats = repeats;
  for (UnitDesign d : designs) {
    Rng rng(7 + std::uint64_t(d));
    RecurrentUnitSpec spec{d, channels, channels, kernel, kernel};
    RecurrentUnit<float> unit(spec, rng);
    Tensor<float> x(Shape(channels, dy, dx));
    for (auto& v : x.mutable_vec()) v = float(rng.uniform(-1.0, 1.0));
    Context<float> ctx;
    ctx.check_finite = false;
    UnitState<float> state = unit.initial_state(dy, dx);
    for (int i = 0; i < 3; ++i) state = unit.forward(ctx, x, state).second;  // warm-up

    BenchEntry entry;
    entry.design = d;
    for (int i = 0; i < repeats; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      state = unit.forward(ctx, x, state).second;
      const auto t1 = std::chrono::steady_clock::now();
      entry.times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::vector<double> sorted = entry.times_ms;
    std::sort(sorted.begin(), sorted.end());
    entry.median_ms = sorted.size() % 2 == 1
                          ? sorted[sorted.size() / 2]
                          : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
    UnitCostInputs ci{channels, channels, kernel, kernel, dx, dy};
    entry.flops = flops_unit(d, ci);
    res.entries.push_back(std::move(entry));
  }
  return res;
}

std::string BenchResult::to_json() const {
  json j;
  j["I"] = channels;
  j["O"] = channels;
  j["Kx"] = kh;
  j["Ky"] = kw;
  j["Dx"] = dx;
  j["Dy"] = dy;
  j["repeats"] = repeats;
  json arr = json::array();
  for (const auto& e : entries) {
    json je;
    je["design"] = unit_design_name(e.design);
    je["median_ms"] = e.median_ms;
    je["flops"] = e.flops;
    je["times_ms"] = e.times_ms;
    arr.push_back(je);
  }
  j["entries"] = arr;
  if (entries.size() >= 2) {
    json ratios;
    for (std::size_t i = 0; i < entries.size(); ++i)
      for (std::size_t k = 0; k < entries.size(); ++k)
        if (i != k) {
          const std::string key = std::string(unit_design_name(entries[i].design)) + "_over_" +
                                  unit_design_name(entries[k].design);
          ratios[key + "_time"] = entries[i].median_ms / entries[k].median_ms;
          ratios[key + "_flops"] = double(entries[i].flops) / double(entries[k].flops);
        }
    j["ratios"] = ratios;
  }
  return j.dump(2);
}

std::string BenchResult::to_table() const {
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-10s %14s %16s\n", "design", "median_ms", "flops");
  out += buf;
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof(buf), "%-10s %14.3f %16llu\n", unit_design_name(e.design),
                  e.median_ms, static_cast<unsigned long long>(e.flops));
    out += buf;
  }
  return out;
}

template class Adam<float>;
template class Adam<double>;
template double clip_gradients<float>(std::vector<NamedParam<float>>&, double);
template double clip_gradients<double>(std::vector<NamedParam<double>>&, double);
template Tensor<float> image_to_tensor<float>(const Image&);
template Tensor<double> image_to_tensor<double>(const Image&);

}  // namespace vseg
