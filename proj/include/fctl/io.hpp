#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fctl/dataset.hpp"
#include "fctl/eval.hpp"
#include "fctl/model.hpp"
#include "fctl/train.hpp"

namespace fctl {

// Binary PPM (P6) and PGM (P5), maxval 255. Header comments are skipped.
std::string encode_ppm(const RgbImage& image);
RgbImage decode_ppm(std::span<const std::uint8_t> bytes);
std::string encode_pgm(const LabelMap& labels);
LabelMap decode_pgm(std::span<const std::uint8_t> bytes);

void save_ppm(const std::filesystem::path& path, const RgbImage& image);
RgbImage load_ppm(const std::filesystem::path& path);
void save_pgm(const std::filesystem::path& path, const LabelMap& labels);
LabelMap load_pgm(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParameterSet<float> params;
  std::uint64_t seed = 0;
  std::uint32_t epochs = 0;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Settings shared by every subcommand; stored as `key=value` lines.
struct RunConfig {
  Index patch = 64;
  Index overlap = 16;
  std::vector<ContextScale> contexts = {ContextScale::scaled(1), ContextScale::scaled(2), ContextScale::scaled(3)};
  Index num_classes = 5;
  double lr0 = 5e-5;
  Index epochs = 50;
  double gamma = 3.0;
  std::uint64_t seed = 0;
  double refine_scale = 2.0;
  MergeMode merge_mode = MergeMode::Refine;
  Aggregate aggregate = Aggregate::Local;
  FusionMode fusion = FusionMode::Adaptive;
  Index accum_steps = 6;
  Index refine_source_epochs = -1;
  Index refine_epochs = 50;
  bool flips = false;

  /// Throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  void validate() const;

  SegModelConfig seg_model() const;
  RefineConfig refine_model() const;
  TrainConfig seg_training() const;
  TrainConfig refine_training() const;
  PipelineOptions pipeline() const;
};

/// Parses `key=value` lines; `#` starts a comment. Errors carry the line number.
RunConfig parse_run_config(const std::string& text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});
std::string format_run_config(const RunConfig& config);

/// Dataset directory: images/<id>.ppm, labels/<id>.pgm, manifest.csv (`id,image,labels`).
void save_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace fctl
