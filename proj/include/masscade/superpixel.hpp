#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "masscade/annotation.hpp"
#include "masscade/image.hpp"
#include "masscade/morphosift.hpp"

namespace masscade {

struct SuperpixelMap {
  int width = 0;
  int height = 0;
  std::vector<std::int32_t> labels;  // row-major, values 0..k_actual-1
  int k_actual = 0;

  bool operator==(const SuperpixelMap&) const = default;
};

/// SLIC on one grayscale channel.
///
/// The image is smoothed with a Gaussian of std `sigma` and rescaled to
/// intensity units of [0, 100]. Centers start on a staggered (hexagonal
/// offset) grid of step S = sqrt(N / k) and move to the lowest-gradient pixel
/// of their 3x3 neighbourhood. Each iteration assigns pixels within a 2S x 2S
/// window by D = sqrt(dI^2 + compactness^2 (ds / S)^2) and moves centers to
/// their cluster means. Components smaller than S^2 / 4 are merged into their
/// largest 4-adjacent neighbour, so every final label is 4-connected.
///
/// Throws InvalidArgument when k < 1, k > pixel count or compactness <= 0.
SuperpixelMap slic(const GrayImage16& image, int k, double compactness, double sigma,
                   int iterations);

enum class CandidateLabel { unlabeled, positive, negative };

const char* to_string(CandidateLabel label);
CandidateLabel candidate_label_from_string(const std::string& s);

struct Candidate {
  std::string case_id;
  int scale_index = 1;  // 1-based, matches ScaleBand::index
  PixelSet pixels;
  Point2 centroid;
  double mean_sifted_intensity = 0.0;
  CandidateLabel label = CandidateLabel::unlabeled;
  double best_dice = 0.0;
  std::optional<std::string> matched_mass_id;

  bool operator==(const Candidate&) const = default;
};

struct SlicConfig {
  /// Empty means one nominal superpixel per mid-band mass area:
  /// k_s = round(area / (pi (d_mid / 2)^2)), d_mid the geometric band mean.
  std::vector<int> superpixels_per_scale;
  /// Empty means adaptive: c0 * (dynamic range of the scale image) / 65535.
  std::vector<double> compactness_per_scale;
  double compactness_c0 = 10.0;
  double smoothing_sigma = 5.00;
  int iterations = 10;
  std::vector<double> dice_threshold_per_scale{0.25, 0.25, 0.25, 0.25};
  double intensity_percentile = 60.0;
  double min_breast_fraction = 0.5;

  /// Throws InvalidArgument; n_scales is the stack length being processed.
  void validate(std::size_t n_scales) const;
  bool operator==(const SlicConfig&) const = default;
};

int default_superpixel_count(int width, int height, const ScaleBand& band);
double adaptive_compactness(const GrayImage16& scale_image, double c0);

/// One candidate per superpixel per scale, ordered by scale then label.
std::vector<Candidate> extract_candidates(const SiftedStack& stack, const BinaryMask& breast_mask,
                                          const SlicConfig& cfg, const std::string& case_id = "");

/// Annotates best Dice over masses and the positive/negative label; never
/// changes pixel sets. thresholds[s - 1] applies to scale s.
std::vector<Candidate> label_candidates(std::vector<Candidate> cands,
                                        const std::vector<MassAnnotation>& masses,
                                        const std::vector<double>& thresholds);

/// Per-(case, scale) intensity cutoffs: the cfg.intensity_percentile-th
/// percentile (linear interpolation) of candidate mean sifted intensities.
using CohortKey = std::pair<std::string, int>;
std::map<CohortKey, double> cohort_intensity_cutoffs(const std::vector<Candidate>& cands,
                                                     double percentile);

/// Drops candidates with in-breast fraction < cfg.min_breast_fraction or mean
/// intensity below their cohort cutoff. Survivors are returned unchanged.
std::vector<Candidate> apply_redundancy_filter(std::vector<Candidate> cands,
                                               const BinaryMask& breast_mask,
                                               const std::map<CohortKey, double>& cutoffs,
                                               double min_breast_fraction);

/// Two-phase filter: gather cohort cutoffs, then drop.
std::vector<Candidate> redundancy_filter(std::vector<Candidate> cands,
                                         const BinaryMask& breast_mask, const SlicConfig& cfg);

/// Linear-interpolation percentile of unsorted values (p in [0, 100]).
double percentile(std::vector<double> values, double p);

/// Row-major run-length encoding: start0, len0, start1, len1, ...
std::vector<std::uint32_t> encode_rle(const PixelSet& pixels);
PixelSet decode_rle(const std::vector<std::uint32_t>& runs, int width, int height);

/// One JSON object per line: case_id, scale, centroid, area, label, best_dice,
/// matched_mass_id, mean_sifted_intensity, width, height, rle.
std::string candidate_to_jsonl(const Candidate& c);
Candidate candidate_from_jsonl(const std::string& line);

}  // namespace masscade
