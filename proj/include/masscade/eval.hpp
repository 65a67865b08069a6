#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "masscade/annotation.hpp"
#include "masscade/image.hpp"

namespace masscade {

struct FoldSplit {
  int fold_index = 0;
  std::vector<std::string> train_case_ids;
  std::vector<std::string> validation_case_ids;
  std::vector<std::string> test_case_ids;

  bool operator==(const FoldSplit&) const = default;
};

/// Shuffles case ids with `seed` and deals them into k near-equal test folds.
/// For each fold, round(val_fraction * rest) (at least 1, at most rest - 1)
/// of the remaining cases become validation. Lists are sorted.
std::vector<FoldSplit> kfold_by_image(const std::vector<std::string>& case_ids, int k,
                                      double val_fraction, std::uint64_t seed);

struct ScoredRegion {
  PixelSet pixels;
  double probability = 0.0;
};

struct MatchResult {
  int tp = 0, fp = 0, fn = 0;
  std::vector<std::pair<std::size_t, std::size_t>> matched;  // (mass index, prediction index)
};

/// Suppresses predictions overlapping a higher-scored one by IoU > merge_iou,
/// then matches masses one-to-one by descending Dice (>= dice_min).
MatchResult match_predictions(const std::vector<ScoredRegion>& preds,
                              const std::vector<MassAnnotation>& masses, double dice_min,
                              double merge_iou);

struct FrocPoint {
  double threshold = 0.0;
  double tpr = 0.0;
  double fpi = 0.0;
  bool operator==(const FrocPoint&) const = default;
};

struct CaseScores {
  std::string case_id;
  std::vector<ScoredRegion> predictions;
  std::vector<MassAnnotation> masses;
};

/// Sorted distinct probabilities present in `cases`.
std::vector<double> observed_thresholds(const std::vector<CaseScores>& cases);

/// One point per threshold (ascending): keep predictions with probability >=
/// threshold, tpr = sum TP / sum masses, fpi = sum FP / number of cases.
/// Empty `thresholds` means observed_thresholds(cases).
std::vector<FrocPoint> froc(const std::vector<CaseScores>& cases, std::vector<double> thresholds,
                            double dice_min, double merge_iou);

/// Highest TPR among points with fpi <= max_fpi (0 if none).
double tpr_at_fpi(const std::vector<FrocPoint>& curve, double max_fpi);

void write_froc_csv(const std::filesystem::path& path, const std::vector<FrocPoint>& curve);
std::vector<FrocPoint> read_froc_csv(const std::filesystem::path& path);

enum class HeatmapCombine { mean, max };

struct HeatMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major, in [0, 1]

  [[nodiscard]] double at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
};

/// Per pixel, the mean (or max) probability of the regions covering it; 0 where
/// nothing covers it.
HeatMap heatmap(const std::vector<ScoredRegion>& regions, int width, int height,
                HeatmapCombine combine = HeatmapCombine::mean);

/// 8-bit grayscale PNG, value * 255 rounded.
void write_heatmap_png(const std::filesystem::path& path, const HeatMap& map);

/// Side-by-side RGB: the image on the left, the heat map on the right, both
/// with mass outlines drawn in green.
void write_heatmap_overlay(const std::filesystem::path& path, const GrayImage16& image,
                           const HeatMap& map, const std::vector<MassAnnotation>& masses);

}  // namespace masscade
