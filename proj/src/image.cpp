#include "masscade/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "masscade/error.hpp"

namespace masscade {

namespace {

void require_dims(int w, int h) {
  if (w <= 0 || h <= 0) {
    throw InvalidArgument("image dimensions must be positive, got " + std::to_string(w) + "x" +
                          std::to_string(h));
  }
}

double dice_from_counts(std::size_t inter, std::size_t a, std::size_t b) {
  if (a + b == 0) return 0.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

std::size_t intersection_count(const PixelSet& a, const PixelSet& b) {
  std::size_t n = 0;
  auto ia = a.indices.begin();
  auto ib = b.indices.begin();
  while (ia != a.indices.end() && ib != b.indices.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++n;
      ++ia;
      ++ib;
    }
  }
  return n;
}

int mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n - 2;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

GrayImage16::GrayImage16(int w, int h, std::uint16_t fill) : width(w), height(h) {
  require_dims(w, h);
  pixels.assign(static_cast<std::size_t>(w) * h, fill);
}

BinaryMask::BinaryMask(int w, int h, bool fill) : width(w), height(h) {
  require_dims(w, h);
  bits.assign(static_cast<std::size_t>(w) * h, fill ? 1 : 0);
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(),
                                                [](std::uint8_t b) { return b != 0; }));
}

FloatImage::FloatImage(int w, int h, float fill) : width(w), height(h) {
  require_dims(w, h);
  pixels.assign(static_cast<std::size_t>(w) * h, fill);
}

PixelSet PixelSet::from_mask(const BinaryMask& mask) {
  PixelSet out;
  out.width = mask.width;
  out.height = mask.height;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (mask.bits[i]) out.indices.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

BinaryMask PixelSet::to_mask() const {
  BinaryMask m(width, height);
  for (auto i : indices) m.bits[i] = 1;
  return m;
}

double dice(const BinaryMask& a, const BinaryMask& b) {
  if (a.width != b.width || a.height != b.height) {
    throw InvalidArgument("dice: mask dimensions differ");
  }
  std::size_t inter = 0, ca = 0, cb = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    const bool va = a.bits[i] != 0;
    const bool vb = b.bits[i] != 0;
    ca += va;
    cb += vb;
    inter += (va && vb);
  }
  return dice_from_counts(inter, ca, cb);
}

double dice(const PixelSet& a, const PixelSet& b) {
  if (a.width != b.width || a.height != b.height) {
    throw InvalidArgument("dice: region dimensions differ");
  }
  return dice_from_counts(intersection_count(a, b), a.size(), b.size());
}

double dice(const PixelSet& a, const BinaryMask& b) {
  if (a.width != b.width || a.height != b.height) {
    throw InvalidArgument("dice: region and mask dimensions differ");
  }
  std::size_t inter = 0;
  for (auto i : a.indices) inter += b.bits[i] != 0;
  return dice_from_counts(inter, a.size(), b.count());
}

double iou(const PixelSet& a, const PixelSet& b) {
  if (a.width != b.width || a.height != b.height) {
    throw InvalidArgument("iou: region dimensions differ");
  }
  const std::size_t inter = intersection_count(a, b);
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

int mm_to_pixels(double diameter_mm, double spacing_um, double downsample) {
  if (!(diameter_mm > 0.0) || !(spacing_um > 0.0) || !(downsample > 0.0)) {
    throw InvalidArgument("mm_to_pixels: all arguments must be positive");
  }
  return static_cast<int>(std::lround(diameter_mm * 1000.0 / (spacing_um * downsample)));
}

FloatImage gaussian_blur(const FloatImage& image, double sigma) {
  if (sigma <= 0.0) return image;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (auto& k : kernel) k /= sum;

  const int w = image.width, h = image.height;
  FloatImage tmp(w, h), out(w, h);
  std::vector<double> line;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[i + radius] * image.at(mirror(x + i, w), y);
      }
      tmp.at(x, y) = static_cast<float>(acc);
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[i + radius] * tmp.at(x, mirror(y + i, h));
      }
      out.at(x, y) = static_cast<float>(acc);
    }
  }
  return out;
}

FloatImage to_float(const GrayImage16& image) {
  FloatImage out(image.width, image.height);
  std::transform(image.pixels.begin(), image.pixels.end(), out.pixels.begin(),
                 [](std::uint16_t v) { return static_cast<float>(v); });
  return out;
}

}  // namespace masscade
