#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "masscade/image.hpp"
#include "masscade/morphosift.hpp"
#include "masscade/superpixel.hpp"

namespace masscade {

/// Version tag of the canonical feature list. Later-stage features are
/// appended under a new tag; models refuse vectors with a different tag.
inline constexpr const char* kFeatureVersion = "masscade-features-v1";
inline constexpr std::size_t kFeatureCount = 22;

/// Canonical order: shape (7), CLAHE histogram (6), sifted-image GLCM (7),
/// cross-scale ratios (2). "kurtosis" is excess kurtosis.
const std::vector<std::string>& feature_names();

struct FeatureVector {
  std::string version = kFeatureVersion;
  std::vector<double> values;

  bool operator==(const FeatureVector&) const = default;
};

struct ShapeFeatures {
  double area = 0, perimeter = 0, circularity = 0, eccentricity = 0, solidity = 0, extent = 0,
         radius = 0;
};

struct HistogramFeatures {
  double mean = 0, smoothness = 0, uniformity = 0, entropy = 0, skew = 0, kurtosis = 0;
};

struct GlcmMatrix {
  int levels = 0;
  std::vector<double> p;  // levels x levels, row-major, sums to 1
  bool symmetric = true;
  bool degenerate = false;  // no valid pixel pairs; p is uniform

  [[nodiscard]] double at(int i, int j) const { return p[static_cast<std::size_t>(i) * levels + j]; }
};

struct GlcmFeatures {
  double contrast = 0, correlation = 0, angular_second_moment = 0, energy = 0, dissimilarity = 0,
         homogeneity = 0, variance = 0;
};

enum class GlcmAngle { deg0, deg45, deg90, deg135 };
inline constexpr std::array<GlcmAngle, 4> kAllGlcmAngles{GlcmAngle::deg0, GlcmAngle::deg45,
                                                         GlcmAngle::deg90, GlcmAngle::deg135};

struct FeatureParams {
  int glcm_levels = 32;
  int glcm_distance = 1;
  bool operator==(const FeatureParams&) const = default;
};

/// Boundary chain length of the region's outer contour(s): 1 per axial step,
/// sqrt(2) per diagonal step. 0 for isolated pixels.
double chain_perimeter(const PixelSet& region);

/// Area of the convex hull of all pixel corners (a filled square has solidity 1).
double convex_hull_area(const PixelSet& region);

ShapeFeatures shape_features(const PixelSet& region);

/// Moments and 64-bin histogram statistics of the region's values scaled to [0, 1].
HistogramFeatures histogram_features(const PixelSet& region, const GrayImage16& image);

/// Symmetric co-occurrence matrix of the region quantized to `levels` bins over
/// its own min..max, averaged over the given angles. Only pairs with both
/// pixels inside the region count; angles without pairs are skipped.
GlcmMatrix glcm(const PixelSet& region, const GrayImage16& image, int levels, int distance,
                const std::vector<GlcmAngle>& angles = {kAllGlcmAngles.begin(),
                                                        kAllGlcmAngles.end()});

GlcmFeatures glcm_features(const GlcmMatrix& g);

/// ((S1 - S2) / S1, (S2 - S3) / S2) with S_k the region mean in stack image k;
/// a denominator below 1e-6 * 65535 yields 0. Requires at least three scales.
std::array<double, 2> scale_ratio_features(const PixelSet& region, const SiftedStack& stack);

/// The full canonical vector for one candidate.
FeatureVector assemble_vector(const Candidate& candidate, const GrayImage16& clahe_image,
                              const SiftedStack& stack, const FeatureParams& params = {});

/// Feature table: one row per candidate, header = feature names + case_id,
/// scale, label. Values use 9 significant digits.
struct FeatureRow {
  FeatureVector features;
  std::string case_id;
  int scale = 0;
  CandidateLabel label = CandidateLabel::unlabeled;
};

/// Round-trips a value through the 9-significant-digit table format.
double quantize_feature(double v);

void write_feature_csv(const std::filesystem::path& path, const std::vector<FeatureRow>& rows);
std::vector<FeatureRow> read_feature_csv(const std::filesystem::path& path);

}  // namespace masscade
