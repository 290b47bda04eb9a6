#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vseg/checkpoint.hpp"
#include "vseg/dataset.hpp"
#include "vseg/flops.hpp"
#include "vseg/train.hpp"
#include "vseg/weather.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vseg;

namespace {

std::string resolve_out_dir(const std::string& flag_value) {
  // VSEG_OUT_DIR overrides the flag when set
  if (const char* env = std::getenv("VSEG_OUT_DIR")) return env;
  return flag_value;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

double round_pct(double ratio, int decimals) {
  double s = 1;
  for (int i = 0; i < decimals; ++i) s *= 10;
  return std::round(ratio * 100.0 * s) / s;
}

Disturbance parse_disturbance(const std::string& rain, double gauss, double sp,
                              bool polygon, double brightness) {
  int chosen = (!rain.empty()) + (gauss > 0) + (sp > 0) + polygon + (brightness > 0);
  require(chosen == 1,
          "choose exactly one disturbance: --rain | --gauss | --salt-pepper | --polygon | "
          "--brightness");
  Disturbance d;
  if (!rain.empty()) {
    d = make_rain_disturbance(rain_preset(rain_level_from_name(rain)));
  } else if (gauss > 0) {
    d.kind = Disturbance::Kind::Gaussian;
    d.amount = gauss;
  } else if (sp > 0) {
    d.kind = Disturbance::Kind::SaltPepper;
    d.amount = sp;
  } else if (polygon) {
    d.kind = Disturbance::Kind::Polygon;
  } else {
    d.kind = Disturbance::Kind::Brightness;
    d.amount = brightness;
  }
  return d;
}

DisturbancePolicy parse_policy(const std::string& name, double subset_p) {
  if (name == "last") return DisturbancePolicy::last_frame_only();
  if (name == "all") return DisturbancePolicy::all_frames();
  if (name == "subset") return DisturbancePolicy::random_subset(subset_p);
  fail("unknown policy '" + name + "' (expected last|all|subset)");
}

int cmd_generate(const std::string& out_dir, std::uint64_t seed, int n_train, int n_val,
                 int classes, int frames, int height, int width) {
  DatasetManifest m =
      generate_dataset(out_dir, seed, n_train, n_val, classes, frames, height, width);
  std::cout << "wrote " << m.train_ids.size() << " train / " << m.val_ids.size()
            << " val sequences to " << m.root << "\n";
  return 0;
}

int cmd_flops_unit(std::int64_t I, std::int64_t O, std::int64_t K, std::int64_t Dx,
                   std::int64_t Dy) {
  UnitCostInputs c{I, O, K, K, Dx, Dy};
  const std::uint64_t std_f = flops_standard_unit(c);
  const std::uint64_t fast_f = flops_fast_unit(c);
  const std::uint64_t faster_f = flops_faster_unit(c);
  json j;
  j["inputs"] = {{"I", I}, {"O", O}, {"Kx", K}, {"Ky", K}, {"Dx", Dx}, {"Dy", Dy}};
  j["flops"] = {{"standard", std_f}, {"fast", fast_f}, {"faster", faster_f}};
  j["ratios_percent"] = {{"fast_over_standard", round_pct(double(fast_f) / std_f, 1)},
                         {"faster_over_standard", round_pct(double(faster_f) / std_f, 2)},
                         {"faster_over_fast", round_pct(double(faster_f) / fast_f, 2)}};
  std::cout << j.dump(2) << "\n";
  std::printf("%-10s %16s %22s\n", "design", "FLOPs", "vs standard (%)");
  std::printf("%-10s %16llu %22s\n", "standard", (unsigned long long)std_f, "100");
  std::printf("%-10s %16llu %22.1f\n", "fast", (unsigned long long)fast_f,
              round_pct(double(fast_f) / std_f, 1));
  std::printf("%-10s %16llu %22.2f\n", "faster", (unsigned long long)faster_f,
              round_pct(double(faster_f) / std_f, 2));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"video-segmentation experimentation kit"};
  app.require_subcommand(1);

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "render a synthetic moving-shapes dataset");
  std::string gen_out = "data";
  std::uint64_t gen_seed = 1;
  int gen_train = 200, gen_val = 50, gen_classes = 8, gen_frames = 4;
  int gen_h = 64, gen_w = 128;
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--train", gen_train, "training sequences");
  gen->add_option("--val", gen_val, "validation sequences");
  gen->add_option("--classes", gen_classes, "class count (2..8)");
  gen->add_option("--frames", gen_frames, "frames per sequence");
  gen->add_option("--height", gen_h, "frame height");
  gen->add_option("--width", gen_w, "frame width");

  // train
  auto* tr = app.add_subcommand("train", "train a model, R repetitions");
  std::string tr_data = "data", tr_out = "runs", tr_config, tr_version = "base",
              tr_design = "standard", tr_init;
  std::uint64_t tr_seed = 1;
  int tr_iters = -1, tr_reps = -1, tr_batch = -1;
  double tr_lr = -1;
  bool tr_no_augment = false;
  tr->add_option("--data", tr_data, "dataset directory");
  tr->add_option("--out", tr_out, "output directory for checkpoints and results");
  tr->add_option("--config", tr_config, "JSON train config file");
  tr->add_option("--version", tr_version, "base|v2|v5|v6");
  tr->add_option("--design", tr_design, "standard|fast|faster");
  tr->add_option("--seed", tr_seed, "training seed");
  tr->add_option("--iters", tr_iters, "training iterations");
  tr->add_option("--reps", tr_reps, "repetitions");
  tr->add_option("--batch", tr_batch, "batch size");
  tr->add_option("--lr", tr_lr, "initial learning rate");
  tr->add_option("--init-from", tr_init, "warm-start backbone from a checkpoint");
  tr->add_flag("--no-augment", tr_no_augment, "disable all training augmentation");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_data = "data", ev_split = "val", ev_rain, ev_policy = "last",
              ev_out;
  double ev_gauss = 0, ev_sp = 0, ev_brightness = 0, ev_subset_p = 0.5;
  bool ev_polygon = false;
  std::uint64_t ev_seed = 0;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "dataset directory");
  ev->add_option("--split", ev_split, "train|val");
  ev->add_option("--rain", ev_rain, "rain preset: light|moderate|heavy");
  ev->add_option("--gauss", ev_gauss, "gaussian noise sigma");
  ev->add_option("--salt-pepper", ev_sp, "salt-and-pepper probability");
  ev->add_flag("--polygon", ev_polygon, "white polygon disturbance");
  ev->add_option("--brightness", ev_brightness, "brightness factor");
  ev->add_option("--policy", ev_policy, "last|all|subset");
  ev->add_option("--subset-p", ev_subset_p, "subset policy probability");
  ev->add_option("--seed", ev_seed, "disturbance seed");
  ev->add_option("--out", ev_out, "write metrics JSON here (default: stdout only)");

  // perturb
  auto* pb = app.add_subcommand("perturb", "write a disturbed copy of a dataset");
  std::string pb_data = "data", pb_out = "data_perturbed", pb_rain, pb_policy = "last";
  double pb_gauss = 0, pb_sp = 0, pb_brightness = 0, pb_subset_p = 0.5;
  bool pb_polygon = false;
  std::uint64_t pb_seed = 0;
  pb->add_option("--data", pb_data, "input dataset directory");
  pb->add_option("--out", pb_out, "output dataset directory");
  pb->add_option("--rain", pb_rain, "rain preset: light|moderate|heavy");
  pb->add_option("--gauss", pb_gauss, "gaussian noise sigma");
  pb->add_option("--salt-pepper", pb_sp, "salt-and-pepper probability");
  pb->add_flag("--polygon", pb_polygon, "white polygon disturbance");
  pb->add_option("--brightness", pb_brightness, "brightness factor");
  pb->add_option("--policy", pb_policy, "last|all|subset");
  pb->add_option("--subset-p", pb_subset_p, "subset policy probability");
  pb->add_option("--seed", pb_seed, "disturbance seed");

  // flops
  auto* fl = app.add_subcommand("flops", "analytic recurrent-unit cost model");
  std::int64_t fl_I = 128, fl_O = -1, fl_K = 3, fl_D = -1, fl_Dx = 1, fl_Dy = 1;
  std::string fl_network;
  fl->add_option("--I", fl_I, "input channels");
  fl->add_option("--O", fl_O, "output channels (default: I)");
  fl->add_option("--K", fl_K, "kernel extent");
  fl->add_option("--D", fl_D, "square feature-map extent (sets Dx=Dy=D)");
  fl->add_option("--Dx", fl_Dx, "feature-map width");
  fl->add_option("--Dy", fl_Dy, "feature-map height");
  fl->add_option("--network", fl_network,
                 "network config JSON file: report costs over all versions");

  // bench
  auto* bn = app.add_subcommand("bench", "wall-clock unit forward benchmark");
  int bn_I = 128, bn_K = 3, bn_Dx = 64, bn_Dy = 64, bn_repeats = 30;
  std::string bn_out;
  bn->add_option("--I", bn_I, "channels (I=O)");
  bn->add_option("--K", bn_K, "kernel extent");
  bn->add_option("--Dx", bn_Dx, "feature-map width");
  bn->add_option("--Dy", bn_Dy, "feature-map height");
  bn->add_option("--repeats", bn_repeats, "timed repetitions (>= 3)");
  bn->add_option("--out", bn_out, "write JSON report here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_generate(resolve_out_dir(gen_out), gen_seed, gen_train, gen_val,
                          gen_classes, gen_frames, gen_h, gen_w);

    if (tr->parsed()) {
      TrainConfig cfg;
      if (!tr_config.empty()) cfg = train_config_from_json_text(read_file(tr_config));
      DatasetManifest manifest = read_manifest(tr_data);
      cfg.net.height = manifest.height;
      cfg.net.width = manifest.width;
      cfg.net.num_classes = manifest.num_classes;
      if (tr->count("--version")) cfg.net.version = net_version_from_name(tr_version);
      if (tr->count("--design")) cfg.net.unit_design = unit_design_from_name(tr_design);
      if (tr->count("--seed")) cfg.seed = tr_seed;
      if (tr_iters > 0) cfg.total_iters = tr_iters;
      if (tr_reps > 0) cfg.repetitions = tr_reps;
      if (tr_batch > 0) cfg.batch = tr_batch;
      if (tr_lr > 0) cfg.initial_lr = tr_lr;
      if (!tr_init.empty()) cfg.init_from = tr_init;
      if (tr_no_augment) cfg.augment_geometric = cfg.augment_disturb = false;
      cfg.validate();

      const std::string out_dir = resolve_out_dir(tr_out);
      fs::create_directories(out_dir);
      std::vector<MetricsSummary> reps;
      for (int rep = 0; rep < cfg.repetitions; ++rep) {
        TrainConfig rep_cfg = cfg;
        rep_cfg.seed = cfg.seed + std::uint64_t(rep);
        Network<float> net = train(rep_cfg, manifest, [&](int it, double loss, double lr) {
          if (it % 200 == 0)
            std::cout << "rep " << rep << " iter " << it << " loss " << loss << " lr " << lr
                      << "\n";
        });
        const std::string ckpt = out_dir + "/rep_" + std::to_string(rep) + ".ckpt";
        save_checkpoint(ckpt, net);
        MetricsSummary m = evaluate(net, manifest, "val");
        std::cout << "rep " << rep << " clean val: " << m.to_json() << "\n";
        reps.push_back(m);
      }
      RunResult result = aggregate_runs(reps);
      std::ofstream out(out_dir + "/run_result.json");
      out << result.to_json() << "\n";
      std::cout << result.to_json() << "\n";
      return 0;
    }

    if (ev->parsed()) {
      Checkpoint ckpt = load_checkpoint(ev_ckpt);
      Network<float> net(ckpt.config, 0);
      load_into_network(ckpt, net, /*strict=*/true);
      DatasetManifest manifest = read_manifest(ev_data);
      EvalOptions opts;
      if (!ev_rain.empty() || ev_gauss > 0 || ev_sp > 0 || ev_polygon || ev_brightness > 0) {
        opts.disturb = true;
        opts.disturbance =
            parse_disturbance(ev_rain, ev_gauss, ev_sp, ev_polygon, ev_brightness);
        opts.policy = parse_policy(ev_policy, ev_subset_p);
        opts.seed = ev_seed;
      }
      MetricsSummary m = evaluate(net, manifest, ev_split, opts);
      std::cout << m.to_json() << "\n";
      if (!ev_out.empty()) {
        std::ofstream out(resolve_out_dir(ev_out));
        out << m.to_json() << "\n";
      }
      return 0;
    }

    if (pb->parsed()) {
      DatasetManifest manifest = read_manifest(pb_data);
      Disturbance d = parse_disturbance(pb_rain, pb_gauss, pb_sp, pb_polygon, pb_brightness);
      DisturbancePolicy policy = parse_policy(pb_policy, pb_subset_p);

      const std::string out_root = resolve_out_dir(pb_out);
      DatasetManifest out_manifest = manifest;
      out_manifest.root = out_root;
      fs::create_directories(out_root);
      std::uint64_t idx = 0;
      for (const std::string split : {"train", "val"}) {
        for (const auto& id : manifest.split_ids(split)) {
          VideoSample s = load_sample(manifest, split, id);
          VideoSample disturbed =
              apply_policy(s, policy, d, splitmix64(pb_seed ^ splitmix64(++idx)));
          write_sample(out_manifest.sample_dir(split, id), disturbed);
        }
      }
      write_manifest(out_manifest);
      json sidecar;
      sidecar["source"] = pb_data;
      sidecar["seed"] = pb_seed;
      sidecar["policy"] = pb_policy;
      sidecar["rain"] = pb_rain;
      sidecar["gauss_sigma"] = pb_gauss;
      sidecar["salt_pepper_p"] = pb_sp;
      sidecar["polygon"] = pb_polygon;
      sidecar["brightness"] = pb_brightness;
      std::ofstream side(out_root + "/perturb.json");
      side << sidecar.dump(2) << "\n";
      std::cout << "wrote disturbed dataset to " << out_root << "\n";
      return 0;
    }

    if (fl->parsed()) {
      if (!fl_network.empty()) {
        NetworkConfig cfg = network_config_from_json_text(read_file(fl_network));
        NetworkCostReport rep = network_cost_report(cfg);
        std::cout << rep.to_json() << "\n" << rep.to_table();
        return 0;
      }
      if (fl_O < 0) fl_O = fl_I;
      if (fl_D > 0) fl_Dx = fl_Dy = fl_D;
      return cmd_flops_unit(fl_I, fl_O, fl_K, fl_Dx, fl_Dy);
    }

    if (bn->parsed()) {
      BenchResult res = bench_units(
          {UnitDesign::Standard, UnitDesign::Fast, UnitDesign::Faster}, bn_I, bn_K, bn_Dx,
          bn_Dy, bn_repeats);
      std::cout << res.to_table();
      if (!bn_out.empty()) {
        std::ofstream out(resolve_out_dir(bn_out));
        out << res.to_json() << "\n";
      } else {
        std::cout << res.to_json() << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
