// Command-line front end: synth, train-seg, train-refine, infer, eval,
// grad-check, bench.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "fctl/error.hpp"
#include "fctl/eval.hpp"
#include "fctl/io.hpp"
#include "fctl/parallel.hpp"
#include "fctl/synth.hpp"
#include "fctl/tensor_io.hpp"
#include "fctl/train.hpp"
#include "fctl/verification.hpp"

namespace fs = std::filesystem;
using namespace fctl;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitVerify = 2;

struct ConfigFlags {
  std::string file;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "key=value run configuration file");
    cmd->add_option("--set", sets, "override one setting, key=value (repeatable)");
  }

  RunConfig resolve(RunConfig base = {}) const {
    RunConfig cfg = file.empty() ? base : load_run_config(file, base);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
  }
};

struct LoadedModel {
  RunConfig config;
  SegModel<float> seg;
  std::optional<RefineNet<float>> refine;
};

LoadedModel load_model_dir(const fs::path& dir, const ConfigFlags& flags, bool need_refine) {
  RunConfig cfg = load_run_config(dir / "run.cfg");
  cfg = flags.resolve(cfg);
  LoadedModel m{cfg, SegModel<float>(cfg.seg_model(), load_checkpoint(dir / "seg.ckpt").params), std::nullopt};
  if (need_refine) m.refine.emplace(cfg.refine_model(), load_checkpoint(dir / "refine.ckpt").params);
  return m;
}

void print_epoch(const char* what, const LogRow& r) {
  std::fprintf(stderr, "%s epoch %lld iter %lld lr %.3g loss %.5f train_miou %.4f\n", what,
               static_cast<long long>(r.epoch), static_cast<long long>(r.iter), r.lr, r.loss, r.train_miou);
}

long peak_rss_kib() {
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.rfind("VmHWM:", 0) == 0) return std::stol(line.substr(6));
  }
  return -1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tiled contextual segmentation for very large rasters"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset directory");
  std::string synth_out;
  SynthConfig sc;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--num", sc.num_images, "number of images");
  synth->add_option("--size", sc.image_size, "image side in pixels");
  synth->add_option("--seed", sc.seed, "generator seed");
  synth->add_option("--classes", sc.num_classes, "4 or 5");
  synth->add_option("--cue-scale", sc.cue_scale, "terrain feature size in pixels");

  // train-seg
  auto* train_seg = app.add_subcommand("train-seg", "train the patch segmentation model");
  std::string ts_data, ts_out;
  ConfigFlags ts_flags;
  train_seg->add_option("--data", ts_data, "dataset directory")->required();
  train_seg->add_option("--out", ts_out, "model directory to write")->required();
  ts_flags.attach(train_seg);

  // train-refine
  auto* train_ref = app.add_subcommand("train-refine", "train the refinement network from the early checkpoint");
  std::string tr_data, tr_model;
  ConfigFlags tr_flags;
  train_ref->add_option("--data", tr_data, "dataset directory")->required();
  train_ref->add_option("--model", tr_model, "model directory from train-seg")->required();
  tr_flags.attach(train_ref);

  // infer
  auto* infer = app.add_subcommand("infer", "segment one image");
  std::string in_model, in_image, in_out, in_probs, in_merge;
  ConfigFlags in_flags;
  infer->add_option("--model", in_model, "model directory")->required();
  infer->add_option("--image", in_image, "input PPM")->required();
  infer->add_option("--out", in_out, "output label PGM")->required();
  infer->add_option("--probs", in_probs, "also write the probability map (.ten)");
  infer->add_option("--merge-mode", in_merge, "montage, average or refine");
  in_flags.attach(infer);

  // eval
  auto* eval = app.add_subcommand("eval", "print metrics CSV");
  std::vector<std::string> ev_pred, ev_gt;
  std::string ev_model, ev_data, ev_merge;
  Index ev_classes = 5;
  ConfigFlags ev_flags;
  eval->add_option("--pred", ev_pred, "predicted label PGM (repeatable)");
  eval->add_option("--gt", ev_gt, "ground-truth label PGM (repeatable)");
  eval->add_option("--classes", ev_classes, "class count for --pred/--gt");
  eval->add_option("--model", ev_model, "model directory (with --data)");
  eval->add_option("--data", ev_data, "dataset directory (with --model)");
  eval->add_option("--merge-mode", ev_merge, "montage, average or refine");
  ev_flags.attach(eval);

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient suite");
  std::uint64_t gc_seed = 1;
  Index gc_instances = 20;
  gc->add_option("--seed", gc_seed, "instance seed");
  gc->add_option("--instances", gc_instances, "random instances per op");

  // bench
  auto* bench = app.add_subcommand("bench", "per-patch forward latency and peak memory");
  ConfigFlags bn_flags;
  Index bn_patches = 20, bn_size = 256;
  bench->add_option("--patches", bn_patches, "patches to time");
  bench->add_option("--size", bn_size, "synthetic raster side");
  bn_flags.attach(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    configure_threads_from_env();

    if (*synth) {
      const Dataset data = synth_dataset(sc);
      save_dataset(synth_out, data);
      std::printf("wrote %zu images to %s\n", data.size(), synth_out.c_str());
      return 0;
    }

    if (*train_seg) {
      const RunConfig cfg = ts_flags.resolve();
      const Dataset data = load_dataset(ts_data);
      const TrainConfig tc = cfg.seg_training();
      auto result = train_segmentation<float>(data, tc, cfg.seg_model(),
                                              [](const LogRow& r) { print_epoch("seg", r); });
      fs::create_directories(ts_out);
      const fs::path out(ts_out);
      write_file_atomic(out / "run.cfg", format_run_config(cfg));
      save_checkpoint(out / "seg.ckpt", {result.model.params().clone(), tc.seed, static_cast<std::uint32_t>(tc.epochs)});
      save_checkpoint(out / "seg_early.ckpt",
                      {result.early.clone(), tc.seed, static_cast<std::uint32_t>(tc.source_epochs())});
      write_file_atomic(out / "seg_log.csv", log_csv(result.log));
      std::printf("final loss %.6f train_miou %.6f\n", result.log.back().loss, result.log.back().train_miou);
      return 0;
    }

    if (*train_ref) {
      const fs::path dir(tr_model);
      const RunConfig cfg = tr_flags.resolve(load_run_config(dir / "run.cfg"));
      const Dataset data = load_dataset(tr_data);
      const SegModel<float> early(cfg.seg_model(), load_checkpoint(dir / "seg_early.ckpt").params);
      const auto samples = generate_refinement_data(early, data, cfg.overlap, ContextScale::scaled(cfg.refine_scale));
      const TrainConfig tc = cfg.refine_training();
      auto result = train_refinement<float>(samples, tc, cfg.refine_model(),
                                            [](const LogRow& r) { print_epoch("refine", r); });
      save_checkpoint(dir / "refine.ckpt",
                      {result.model.params().clone(), tc.seed, static_cast<std::uint32_t>(tc.epochs)});
      write_file_atomic(dir / "refine_log.csv", log_csv(result.log));
      std::printf("refinement samples %zu final loss %.6f\n", samples.size(), result.log.back().loss);
      return 0;
    }

    if (*infer) {
      if (!in_merge.empty()) in_flags.sets.push_back("merge_mode=" + in_merge);
      RunConfig peek = in_flags.resolve(load_run_config(fs::path(in_model) / "run.cfg"));
      const auto m = load_model_dir(in_model, in_flags, peek.merge_mode == MergeMode::Refine);
      const RgbImage image = load_ppm(in_image);
      const Tensor<float> prob = run_pipeline(image_to_tensor<float>(image), seg_predictor(m.seg),
                                              m.config.pipeline(), m.refine ? &*m.refine : nullptr);
      save_pgm(in_out, argmax_labels(prob));
      if (!in_probs.empty()) save_tensor(in_probs, to_raw(prob));
      return 0;
    }

    if (*eval) {
      if (!ev_model.empty() || !ev_data.empty()) {
        if (ev_model.empty() || ev_data.empty()) throw ConfigError("--model and --data go together");
        if (!ev_merge.empty()) ev_flags.sets.push_back("merge_mode=" + ev_merge);
        RunConfig peek = ev_flags.resolve(load_run_config(fs::path(ev_model) / "run.cfg"));
        const auto m = load_model_dir(ev_model, ev_flags, peek.merge_mode == MergeMode::Refine);
        const Dataset data = load_dataset(ev_data);
        const auto report = evaluate_dataset<float>(data, seg_predictor(m.seg), m.config.pipeline(),
                                                    m.refine ? &*m.refine : nullptr);
        std::fputs(metrics_csv(report).c_str(), stdout);
        return 0;
      }
      if (ev_pred.empty() || ev_pred.size() != ev_gt.size()) {
        throw ConfigError("eval needs matching --pred/--gt lists, or --model with --data");
      }
      ConfusionMatrix cm(ev_classes);
      for (std::size_t i = 0; i < ev_pred.size(); ++i) cm += confusion(load_pgm(ev_pred[i]), load_pgm(ev_gt[i]), ev_classes);
      std::fputs(metrics_csv(metrics(cm)).c_str(), stdout);
      return 0;
    }

    if (*gc) {
      bool ok = true;
      double worst = 0;
      const auto t0 = std::chrono::steady_clock::now();
      gradient_suite(gc_seed, gc_instances, [&](const GradSuiteEntry& e) {
        std::printf("%-26s max_rel_err %.3e tol %.0e coords %6lld %s\n", e.name.c_str(), e.max_relative_error,
                    e.tolerance, static_cast<long long>(e.coordinates), e.passed() ? "ok" : "FAIL");
        std::fflush(stdout);
        ok = ok && e.passed();
        worst = std::max(worst, e.max_relative_error);
      });
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::printf("max relative error %.3e (%.1f s)\n", worst, secs);
      if (!ok) {
        std::fprintf(stderr, "grad-check failed\n");
        return kExitVerify;
      }
      return 0;
    }

    if (*bench) {
      const RunConfig cfg = bn_flags.resolve();
      SynthConfig bsc;
      bsc.image_size = bn_size;
      bsc.num_images = 1;
      bsc.patch = cfg.patch;
      bsc.num_classes = cfg.num_classes;
      const Dataset data = synth_dataset(bsc);
      const SegModel<float> model(cfg.seg_model(), cfg.seed);
      const Tensor<float> raster = image_to_tensor<float>(data[0].image);
      const PatchGrid grid = plan_grid(bn_size, bn_size, cfg.patch, cfg.overlap);
      const auto predictor = seg_predictor(model);
      NoGradGuard no_grad;
      predictor(raster, grid, 0);  // warm-up
      const auto t0 = std::chrono::steady_clock::now();
      for (Index i = 0; i < bn_patches; ++i) predictor(raster, grid, i % grid.count());
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() /
          static_cast<double>(bn_patches);
      std::printf("patch %lld contexts %zu threads %d\n", static_cast<long long>(cfg.patch), cfg.contexts.size(),
                  num_threads());
      std::printf("forward_ms_per_patch %.3f\n", ms);
      std::printf("peak_rss_kib %ld\n", peak_rss_kib());
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
