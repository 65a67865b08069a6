#include "masscade/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "masscade/error.hpp"

namespace masscade {

namespace {

void require_same_dims(const GrayImage16& image, const BinaryMask& mask, const char* what) {
  if (image.width != mask.width || image.height != mask.height) {
    throw InvalidArgument(std::string(what) + ": image and mask dimensions differ");
  }
}

int ceil_div(int a, int b) { return (a + b - 1) / b; }

// An axis of n pixels is split into t tiles of real size n / t and a pixel
// belongs to the tile holding its center. Returns the first pixel of tile k.
int tile_start(int k, int n, int t) {
  // smallest i with (2i+1)*t >= 2*k*n
  const long long num = 2LL * k * n - t;
  if (num <= 0) return 0;
  return static_cast<int>((num + 2LL * t - 1) / (2LL * t));
}

struct AxisWeights {
  int t0, t1;
  double f;  // weight of t1
};

AxisWeights axis_weights(int i, int n, int t) {
  const double size = static_cast<double>(n) / t;
  const double g = (i + 0.5) / size - 0.5;
  if (g <= 0.0) return {0, 0, 0.0};
  if (g >= t - 1) return {t - 1, t - 1, 0.0};
  const int t0 = static_cast<int>(std::floor(g));
  return {t0, t0 + 1, g - t0};
}

}  // namespace

void PreprocessConfig::validate() const {
  if (downsample_factor < 1) throw InvalidArgument("preprocess: downsample_factor must be >= 1");
  if (!(clahe_clip_limit > 0.0)) throw InvalidArgument("preprocess: clahe_clip_limit must be > 0");
  if (clahe_tile_rows < 1 || clahe_tile_cols < 1) {
    throw InvalidArgument("preprocess: clahe tiles must be at least 1x1");
  }
  if (clahe_bins < 2 || clahe_bins > 65536) {
    throw InvalidArgument("preprocess: clahe_bins must be in [2, 65536]");
  }
}

GrayImage16 rescale_contrast(const GrayImage16& image, const BinaryMask& mask) {
  require_same_dims(image, mask, "rescale_contrast");
  std::uint16_t lo = std::numeric_limits<std::uint16_t>::max();
  std::uint16_t hi = 0;
  bool any = false;
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    if (!mask.bits[i]) continue;
    any = true;
    lo = std::min(lo, image.pixels[i]);
    hi = std::max(hi, image.pixels[i]);
  }
  if (!any) throw InvalidArgument("rescale_contrast: mask is empty");

  GrayImage16 out(image.width, image.height, 0);
  if (hi == lo) return out;
  const double scale = 65535.0 / (hi - lo);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    if (!mask.bits[i]) continue;
    out.pixels[i] = static_cast<std::uint16_t>(std::lround((image.pixels[i] - lo) * scale));
  }
  return out;
}

GrayImage16 downsample(const GrayImage16& image, int factor) {
  if (factor < 1) throw InvalidArgument("downsample: factor must be >= 1");
  if (factor == 1) return image;
  const int ow = ceil_div(image.width, factor), oh = ceil_div(image.height, factor);
  GrayImage16 out(ow, oh);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      std::uint64_t sum = 0, n = 0;
      for (int y = oy * factor; y < std::min(image.height, (oy + 1) * factor); ++y) {
        for (int x = ox * factor; x < std::min(image.width, (ox + 1) * factor); ++x) {
          sum += image.at(x, y);
          ++n;
        }
      }
      out.at(ox, oy) = static_cast<std::uint16_t>((sum + n / 2) / n);
    }
  }
  return out;
}

BinaryMask downsample_mask(const BinaryMask& mask, int factor) {
  if (factor < 1) throw InvalidArgument("downsample_mask: factor must be >= 1");
  if (factor == 1) return mask;
  const int ow = ceil_div(mask.width, factor), oh = ceil_div(mask.height, factor);
  BinaryMask out(ow, oh);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      int on = 0, n = 0;
      for (int y = oy * factor; y < std::min(mask.height, (oy + 1) * factor); ++y) {
        for (int x = ox * factor; x < std::min(mask.width, (ox + 1) * factor); ++x) {
          on += mask.at(x, y);
          ++n;
        }
      }
      out.set(ox, oy, 2 * on >= n);
    }
  }
  return out;
}

std::vector<MassAnnotation> downsample_masses(const std::vector<MassAnnotation>& masses,
                                              int factor, int out_width, int out_height) {
  std::vector<MassAnnotation> out;
  out.reserve(masses.size());
  for (const auto& m : masses) {
    std::vector<Point2> poly;
    poly.reserve(m.polygon.size());
    for (const auto& p : m.polygon) {
      poly.push_back({(p.x + 0.5) / factor - 0.5, (p.y + 0.5) / factor - 0.5});
    }
    out.push_back(MassAnnotation::from_polygon(m.id, std::move(poly), out_width, out_height));
  }
  return out;
}

TileMapping clahe_tile_mapping(const GrayImage16& image, const BinaryMask& mask, int x0, int y0,
                               int x1, int y1, double clip_limit, int bins) {
  std::vector<double> hist(bins, 0.0);
  std::size_t n = 0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      if (!mask.at(x, y)) continue;
      const int b = static_cast<int>((static_cast<std::uint32_t>(image.at(x, y)) * bins) >> 16);
      hist[b] += 1.0;
      ++n;
    }
  }
  if (n == 0) return {};

  const double clip = clip_limit * static_cast<double>(n) / bins;
  double excess = 0.0;
  for (auto& h : hist) {
    if (h > clip) {
      excess += h - clip;
      h = clip;
    }
  }
  const double add = excess / bins;
  double total = 0.0;
  for (auto& h : hist) {
    h += add;
    total += h;
  }

  TileMapping map(bins);
  double cdf = 0.0;
  for (int b = 0; b < bins; ++b) {
    cdf += hist[b];
    map[b] = static_cast<std::uint16_t>(std::lround(std::min(1.0, cdf / total) * 65535.0));
  }
  return map;
}

GrayImage16 clahe(const GrayImage16& image, const BinaryMask& mask, const PreprocessConfig& cfg) {
  cfg.validate();
  require_same_dims(image, mask, "clahe");
  const int w = image.width, h = image.height;
  const int rows = std::min(cfg.clahe_tile_rows, h), cols = std::min(cfg.clahe_tile_cols, w);
  const int bins = cfg.clahe_bins;

  std::vector<TileMapping> maps(static_cast<std::size_t>(rows) * cols);
  for (int ty = 0; ty < rows; ++ty) {
    const int y0 = tile_start(ty, h, rows), y1 = ty + 1 < rows ? tile_start(ty + 1, h, rows) : h;
    for (int tx = 0; tx < cols; ++tx) {
      const int x0 = tile_start(tx, w, cols),
                x1 = tx + 1 < cols ? tile_start(tx + 1, w, cols) : w;
      maps[ty * cols + tx] =
          clahe_tile_mapping(image, mask, x0, y0, x1, y1, cfg.clahe_clip_limit, bins);
    }
  }

  // Empty tiles borrow from the nearest non-empty tile (center distance in pixels).
  std::vector<int> source(maps.size(), -1);
  const double tw = static_cast<double>(w) / cols, th = static_cast<double>(h) / rows;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (!maps[i].empty()) {
      source[i] = static_cast<int>(i);
      continue;
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < maps.size(); ++j) {
      if (maps[j].empty()) continue;
      const double dx = (static_cast<int>(i % cols) - static_cast<int>(j % cols)) * tw;
      const double dy = (static_cast<int>(i / cols) - static_cast<int>(j / cols)) * th;
      const double d = dx * dx + dy * dy;
      if (d < best) {
        best = d;
        source[i] = static_cast<int>(j);
      }
    }
  }

  GrayImage16 out(w, h, 0);
  if (std::all_of(source.begin(), source.end(), [](int s) { return s < 0; })) return out;

  std::vector<AxisWeights> xw(w), yw(h);
  for (int x = 0; x < w; ++x) xw[x] = axis_weights(x, w, cols);
  for (int y = 0; y < h; ++y) yw[y] = axis_weights(y, h, rows);

  for (int y = 0; y < h; ++y) {
    const AxisWeights& ay = yw[y];
    for (int x = 0; x < w; ++x) {
      if (!mask.at(x, y)) continue;
      const AxisWeights& ax = xw[x];
      const int b = static_cast<int>((static_cast<std::uint32_t>(image.at(x, y)) * bins) >> 16);
      auto m = [&](int ty, int tx) -> double { return maps[source[ty * cols + tx]][b]; };
      const double top = (1.0 - ax.f) * m(ay.t0, ax.t0) + ax.f * m(ay.t0, ax.t1);
      const double bottom = (1.0 - ax.f) * m(ay.t1, ax.t0) + ax.f * m(ay.t1, ax.t1);
      const double v = (1.0 - ay.f) * top + ay.f * bottom;
      out.at(x, y) = static_cast<std::uint16_t>(std::lround(v));
    }
  }
  return out;
}

MammogramCase preprocess_case(const MammogramCase& c, const PreprocessConfig& cfg) {
  cfg.validate();
  c.validate();
  const int f = cfg.downsample_factor;
  MammogramCase out;
  out.case_id = c.case_id;
  out.pixel_spacing_um = c.pixel_spacing_um * f;

  const GrayImage16 rescaled = rescale_contrast(c.image, c.breast_mask);
  const GrayImage16 small = downsample(rescaled, f);
  out.breast_mask = downsample_mask(c.breast_mask, f);
  out.image = clahe(small, out.breast_mask, cfg);
  out.masses = f == 1 ? c.masses : downsample_masses(c.masses, f, small.width, small.height);
  return out;
}

}  // namespace masscade
