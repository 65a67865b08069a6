#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace masscade {

/// Row-major 16-bit grayscale image.
struct GrayImage16 {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> pixels;

  GrayImage16() = default;
  GrayImage16(int w, int h, std::uint16_t fill = 0);

  [[nodiscard]] std::size_t size() const { return pixels.size(); }
  [[nodiscard]] bool empty() const { return pixels.empty(); }
  [[nodiscard]] std::uint16_t at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  std::uint16_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }

  bool operator==(const GrayImage16&) const = default;
};

/// Row-major boolean mask stored one byte per pixel (0 or 1).
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int w, int h, bool fill = false);

  [[nodiscard]] std::size_t size() const { return bits.size(); }
  [[nodiscard]] bool at(int x, int y) const {
    return bits[static_cast<std::size_t>(y) * width + x] != 0;
  }
  void set(int x, int y, bool v = true) {
    bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0;
  }
  [[nodiscard]] std::size_t count() const;

  bool operator==(const BinaryMask&) const = default;
};

/// Single-precision working image used for smoothing and synthesis.
struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  FloatImage() = default;
  FloatImage(int w, int h, float fill = 0.0f);

  [[nodiscard]] float at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// Sparse region: sorted, unique row-major indices into a width x height grid.
///
/// Candidates are stored this way rather than as full-frame masks; a 512x512
/// case produces thousands of superpixels.
struct PixelSet {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> indices;

  static PixelSet from_mask(const BinaryMask& mask);
  [[nodiscard]] BinaryMask to_mask() const;
  [[nodiscard]] std::size_t size() const { return indices.size(); }
  [[nodiscard]] bool empty() const { return indices.empty(); }

  bool operator==(const PixelSet&) const = default;
};

/// Dice overlap 2|a n b| / (|a| + |b|); two empty masks give 0.
/// Throws InvalidArgument on a dimension mismatch.
double dice(const BinaryMask& a, const BinaryMask& b);
double dice(const PixelSet& a, const PixelSet& b);
double dice(const PixelSet& a, const BinaryMask& b);

/// Intersection-over-union of two sparse regions (0 when both are empty).
double iou(const PixelSet& a, const PixelSet& b);

/// Physical diameter to pixel count: round(mm * 1000 / (spacing_um * downsample)).
int mm_to_pixels(double diameter_mm, double spacing_um, double downsample);

/// Separable Gaussian smoothing with mirrored borders. sigma <= 0 returns a copy.
FloatImage gaussian_blur(const FloatImage& image, double sigma);

FloatImage to_float(const GrayImage16& image);

}  // namespace masscade
