// Command-line front end: synthetic data generation, toy training, video
// segmentation, evaluation, gradient checking and overhead benchmarking.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "qmvos/config.hpp"
#include "qmvos/grad_suite.hpp"
#include "qmvos/image_io.hpp"
#include "qmvos/metrics.hpp"
#include "qmvos/pipeline.hpp"
#include "qmvos/synth.hpp"
#include "qmvos/weights_io.hpp"

namespace fs = std::filesystem;
using namespace qmvos;

namespace {

std::string frame_name(size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04zu.ppm", i);
  return buf;
}

std::string mask_name(size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "mask_%04zu.pgm", i);
  return buf;
}

std::string pred_name(size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "pred_%04zu.pgm", i);
  return buf;
}

void write_video_dir(const SynthVideo& video, const std::string& dir) {
  fs::create_directories(dir);
  std::vector<std::string> frame_files;
  for (size_t i = 0; i < video.frames.size(); ++i) {
    frame_files.push_back(frame_name(i));
    write_ppm(video.frames[i], (fs::path(dir) / frame_files.back()).string());
    write_pgm(video.masks[i], (fs::path(dir) / mask_name(i)).string());
  }
  write_manifest(frame_files, (fs::path(dir) / "manifest.txt").string());
}

// Video dir layout: manifest.txt names the frames in order; the .pgm files,
// sorted by name, are the per-frame masks.
std::vector<std::string> sorted_pgms(const std::string& dir) {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
      out.push_back(entry.path().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Tensor> load_frames(const std::string& video_dir) {
  const fs::path dir(video_dir);
  const fs::path manifest = fs::is_directory(dir) ? dir / "manifest.txt" : dir;
  const fs::path base = manifest.parent_path();
  std::vector<Tensor> frames;
  for (const std::string& name : read_manifest(manifest.string())) {
    frames.push_back(image_to_tensor(read_ppm((base / name).string())));
  }
  if (frames.empty()) throw input_error("no frames listed in " + manifest.string());
  return frames;
}

SynthVideo load_video_dir(const std::string& dir) {
  SynthVideo video;
  const fs::path base = fs::is_directory(dir) ? fs::path(dir) : fs::path(dir).parent_path();
  const fs::path manifest = fs::is_directory(dir) ? fs::path(dir) / "manifest.txt" : fs::path(dir);
  for (const std::string& name : read_manifest(manifest.string())) {
    video.frames.push_back(read_ppm((base / name).string()));
  }
  for (const std::string& m : sorted_pgms(base.string())) {
    video.masks.push_back(read_pgm(m));
  }
  if (video.frames.empty()) throw input_error("no frames in " + dir);
  if (video.masks.size() != video.frames.size()) {
    throw input_error(dir + ": " + std::to_string(video.masks.size()) + " masks for " +
                      std::to_string(video.frames.size()) + " frames");
  }
  video.h = video.frames[0].h;
  video.w = video.frames[0].w;
  int n = 0;
  for (const LabelMap& m : video.masks) n = std::max(n, m.max_label());
  video.n_objects = n;
  return video;
}

// Loaded weights must carry exactly the parameters the configured network
// expects, with matching shapes.
void check_weights(const ParamStore& loaded, const RunConfig& cfg) {
  const ParamStore expected = init_net_weights(cfg, 0);
  for (const auto& [name, t] : expected.items()) {
    if (!loaded.has(name)) throw input_error("weight file is missing parameter " + name);
    if (!shape_eq(loaded.get(name).shape(), t.shape())) {
      throw input_error("parameter " + name + " has shape " +
                        shape_str(loaded.get(name).shape()) + ", config expects " +
                        shape_str(t.shape()));
    }
  }
  for (const auto& [name, t] : loaded.items()) {
    if (!expected.has(name)) throw input_error("weight file has unexpected parameter " + name);
  }
}

void write_loss_curve(const std::vector<double>& curve, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open " + path + " for writing");
  os << "step,loss\n";
  os.precision(17);
  for (size_t i = 0; i < curve.size(); ++i) os << i << "," << curve[i] << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Memory-based video object segmentation with dynamic query modulation"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic video");
  uint64_t synth_seed = 0;
  int synth_objects = 2, synth_frames = 16, synth_size = 64;
  std::string synth_scenario = "distinct", synth_out;
  synth->add_option("--seed", synth_seed, "RNG seed");
  synth->add_option("--objects", synth_objects, "number of objects");
  synth->add_option("--frames", synth_frames, "number of frames");
  synth->add_option("--size", synth_size, "square frame side (multiple of 16)");
  synth->add_option("--scenario", synth_scenario, "distinct | similar | occluding");
  synth->add_option("--out", synth_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train the toy network");
  std::vector<std::string> train_data;
  std::string train_weights_out, train_config, train_curve;
  int64_t train_steps = -1, train_seq = -1;
  double train_lr = -1.0;
  int64_t train_seed = -1;
  train->add_option("--data", train_data, "video directory (repeatable)")->required();
  train->add_option("--steps", train_steps, "training steps");
  train->add_option("--lr", train_lr, "learning rate");
  train->add_option("--seq-len", train_seq, "clip length");
  train->add_option("--seed", train_seed, "seed for init and sampling");
  train->add_option("--config", train_config, "config file");
  train->add_option("--out-weights", train_weights_out, "output weight file")->required();
  train->add_option("--out-curve", train_curve, "loss curve CSV (default <out-weights>.loss.csv)");

  // segment
  auto* segment = app.add_subcommand("segment", "Segment a video from its first-frame mask");
  std::string seg_video, seg_mask, seg_weights, seg_out, seg_config;
  segment->add_option("--video", seg_video, "video directory or manifest")->required();
  segment->add_option("--first-mask", seg_mask, "first-frame mask (PGM)")->required();
  segment->add_option("--weights", seg_weights, "QMVW1 weight file")->required();
  segment->add_option("--out", seg_out, "output directory")->required();
  segment->add_option("--config", seg_config, "config file");

  // eval
  auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
  std::string eval_pred, eval_gt, eval_report;
  int eval_tol = -1;
  eval->add_option("--pred", eval_pred, "directory of predicted masks")->required();
  eval->add_option("--gt", eval_gt, "directory of ground-truth masks")->required();
  eval->add_option("--report", eval_report, "output JSON report")->required();
  eval->add_option("--tol", eval_tol, "boundary match radius (default 0.008 * diagonal)");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");

  // bench
  auto* bench = app.add_subcommand("bench", "Per-frame overhead benchmark");
  std::string bench_video, bench_weights, bench_config, bench_report;
  bool bench_baseline = false;
  bench->add_option("--video", bench_video, "video directory or manifest")->required();
  bench->add_option("--weights", bench_weights, "QMVW1 weight file")->required();
  bench->add_option("--config", bench_config, "config file");
  bench->add_option("--report", bench_report, "also write the JSON report here");
  bench->add_flag("--baseline", bench_baseline, "also measure the static-head baseline");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const SynthVideo video =
          gen_synthetic(synth_seed, synth_objects, synth_frames, synth_size, synth_size,
                        scenario_from_string(synth_scenario));
      write_video_dir(video, synth_out);
      std::cout << "wrote " << video.frames.size() << " frames to " << synth_out << "\n";
    } else if (*train) {
      RunConfig cfg = train_config.empty() ? RunConfig{} : read_config(train_config);
      if (train_steps >= 0) cfg.steps = train_steps;
      if (train_lr >= 0.0) cfg.lr = train_lr;
      if (train_seq >= 0) cfg.seq_len = train_seq;
      if (train_seed >= 0) cfg.seed = static_cast<uint64_t>(train_seed);
      cfg.validate();
      std::vector<SynthVideo> videos;
      for (const std::string& d : train_data) videos.push_back(load_video_dir(d));
      ParamStore weights = init_net_weights(cfg, cfg.seed);
      const TrainStats stats = train_toy(videos, weights, cfg);
      save_weights(weights, train_weights_out);
      const std::string curve_path =
          train_curve.empty() ? train_weights_out + ".loss.csv" : train_curve;
      write_loss_curve(stats.loss_curve, curve_path);
      if (!stats.loss_curve.empty()) {
        std::cout << "steps: " << stats.loss_curve.size() << "  first loss: "
                  << stats.loss_curve.front() << "  last loss: " << stats.loss_curve.back()
                  << "\n";
      }
      std::cout << "wrote " << train_weights_out << " and " << curve_path << "\n";
    } else if (*segment) {
      const RunConfig cfg = seg_config.empty() ? RunConfig{} : read_config(seg_config);
      cfg.validate();
      const std::vector<Tensor> frames = load_frames(seg_video);
      const LabelMap first_mask = read_pgm(seg_mask);
      const ParamStore weights = load_weights(seg_weights);
      check_weights(weights, cfg);
      const SegResult result = segment_video(frames, first_mask, weights, cfg);
      fs::create_directories(seg_out);
      std::vector<std::string> files;
      for (size_t i = 0; i < result.labels.size(); ++i) {
        files.push_back(pred_name(i));
        write_pgm(result.labels[i], (fs::path(seg_out) / files.back()).string());
      }
      write_manifest(files, (fs::path(seg_out) / "manifest.txt").string());
      std::cout << "wrote " << files.size() << " label maps to " << seg_out << "\n";
    } else if (*eval) {
      std::vector<LabelMap> pred, gt;
      for (const std::string& p : sorted_pgms(eval_pred)) pred.push_back(read_pgm(p));
      for (const std::string& p : sorted_pgms(eval_gt)) gt.push_back(read_pgm(p));
      if (pred.empty() || gt.empty()) throw input_error("no .pgm masks found");
      if (pred.size() != gt.size()) {
        throw input_error("prediction and ground truth frame counts differ");
      }
      const int n = gt[0].max_label();
      if (n < 1) throw input_error("ground truth first frame references no objects");
      const int tol = eval_tol >= 0 ? eval_tol : default_tol_radius(gt[0].h, gt[0].w);
      const MetricReport report = evaluate_sequence(pred, gt, n, tol);
      std::ofstream os(eval_report);
      if (!os) throw io_error("cannot open " + eval_report + " for writing");
      os << report_to_json(report);
      std::cout << "J " << report.j_mean << "  F " << report.f_mean << "  J&F "
                << report.jf_mean << "\n";
    } else if (*gradcheck) {
      bool ok = true;
      for (const GradSuiteEntry& entry : run_grad_suite()) {
        const bool pass = entry.max_rel_err < 1e-5;
        ok = ok && pass;
        std::cout << (pass ? "ok   " : "FAIL ") << entry.name << ": max rel err "
                  << entry.max_rel_err << "\n";
      }
      if (!ok) {
        std::cerr << "gradient check failed\n";
        return 1;
      }
    } else if (*bench) {
      const RunConfig cfg = bench_config.empty() ? RunConfig{} : read_config(bench_config);
      cfg.validate();
      const std::vector<Tensor> frames = load_frames(bench_video);
      const fs::path dir = fs::is_directory(bench_video)
                               ? fs::path(bench_video)
                               : fs::path(bench_video).parent_path();
      const auto masks = sorted_pgms(dir.string());
      if (masks.empty()) throw input_error("no first-frame mask (.pgm) found in " + dir.string());
      const LabelMap first_mask = read_pgm(masks.front());
      const ParamStore weights = load_weights(bench_weights);
      check_weights(weights, cfg);
      const OverheadReport report = bench_overhead(frames, first_mask, weights, cfg, bench_baseline);
      const std::string json = overhead_to_json(report);
      std::cout << json;
      if (!bench_report.empty()) {
        std::ofstream os(bench_report);
        if (!os) throw io_error("cannot open " + bench_report + " for writing");
        os << json;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
