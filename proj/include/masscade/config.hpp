#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "masscade/eval.hpp"
#include "masscade/features.hpp"
#include "masscade/morphosift.hpp"
#include "masscade/preprocess.hpp"
#include "masscade/superpixel.hpp"
#include "masscade/svm.hpp"

namespace masscade {

struct SiftConfig {
  std::vector<ScaleBand> bands = default_bands();
  int n_orientations = 18;
  bool operator==(const SiftConfig&) const = default;
};

struct CascadeConfig {
  SvmParams svm;
  std::uint64_t seed = 7;  // base of the per-fold partition seeds
  bool operator==(const CascadeConfig&) const = default;
};

struct EvalConfig {
  int k = 10;
  double val_fraction = 0.10;
  double dice_min = 0.20;
  double merge_iou = 0.5;
  HeatmapCombine heatmap_combine = HeatmapCombine::mean;
  bool operator==(const EvalConfig&) const = default;
};

/// Phantom suite written by `synth`.
struct SynthConfig {
  int n_cases = 50;
  int width = 512;
  int height = 512;
  int max_masses = 2;
  std::pair<double, double> diameter_range_px{20.0, 80.0};
  bool operator==(const SynthConfig&) const = default;
};

struct PipelineConfig {
  std::uint64_t seed = 42;
  PreprocessConfig preprocess;
  SiftConfig sift;
  SlicConfig superpixel;
  FeatureParams features;
  CascadeConfig cascade;
  EvalConfig eval;
  SynthConfig synth;
  std::string data_dir;
  std::string out_dir;

  /// Throws InvalidArgument naming the offending section.
  void validate() const;
  bool operator==(const PipelineConfig&) const = default;
};

/// Full-resolution defaults: 70 um detector, x4 downsampling, 1.00 clip,
/// 4x4 tiles, sigma 5.00, 18 orientations, four bands, Dice 0.20 matching.
PipelineConfig default_config();

/// Calibrated for the synthetic suite: phantoms already sit on the 280 um grid,
/// so no downsampling; stricter candidate labeling and intensity filtering.
PipelineConfig phantom_config();

nlohmann::json to_json(const PipelineConfig& cfg);

/// Strict parse: unknown keys anywhere are rejected, missing keys keep defaults.
/// Throws InvalidArgument.
PipelineConfig config_from_json(const nlohmann::json& j);

/// Throws DataError when unreadable, InvalidArgument when invalid.
PipelineConfig load_config(const std::filesystem::path& path);

/// Canonical serialized form (stable key order), used for the model hash.
std::string canonical_config_text(const PipelineConfig& cfg);

}  // namespace masscade
