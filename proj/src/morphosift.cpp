#include "masscade/morphosift.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <string>

#include "masscade/error.hpp"

namespace masscade {

namespace {

// round(i * num / den) with halves away from zero, den > 0.
int round_ratio(int i, int num, int den) {
  const long long p = static_cast<long long>(i) * std::abs(num);
  const int r = static_cast<int>((2 * p + den) / (2LL * den));
  return num < 0 ? -r : r;
}

template <typename Op>
GrayImage16 apply_offsets(const GrayImage16& image, const std::vector<Offset>& se,
                          std::uint16_t identity, Op op, int sign) {
  const int w = image.width, h = image.height;
  const bool has_origin = std::find(se.begin(), se.end(), Offset{0, 0}) != se.end();
  GrayImage16 out = has_origin ? image : GrayImage16(w, h, identity);
  for (const Offset& o : se) {
    const int dx = sign * o.dx, dy = sign * o.dy;
    if (dx == 0 && dy == 0) continue;
    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
    const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
    if (x0 >= x1 || y0 >= y1) continue;
    for (int y = y0; y < y1; ++y) {
      std::uint16_t* __restrict dst = out.pixels.data() + static_cast<std::size_t>(y) * w;
      const std::uint16_t* __restrict src =
          image.pixels.data() + static_cast<std::size_t>(y + dy) * w + dx;
      for (int x = x0; x < x1; ++x) dst[x] = op(dst[x], src[x]);
    }
  }
  return out;
}

struct MinOp {
  std::uint16_t operator()(std::uint16_t a, std::uint16_t b) const { return a < b ? a : b; }
};
struct MaxOp {
  std::uint16_t operator()(std::uint16_t a, std::uint16_t b) const { return a > b ? a : b; }
};

}  // namespace

LineSE make_line_se(int length, double angle) {
  if (length < 3 || length % 2 == 0) {
    throw InvalidArgument("make_line_se: length must be odd and >= 3, got " +
                          std::to_string(length));
  }
  const int half = (length - 1) / 2;
  const double c = std::cos(angle), s = std::sin(angle);

  // End point of the positive half; the major axis takes exactly `half` steps.
  const bool x_major = std::abs(c) >= std::abs(s);
  int ex, ey;
  if (x_major) {
    ex = c >= 0.0 ? half : -half;
    ey = static_cast<int>(std::lround(half * s / std::abs(c)));
  } else {
    ey = s >= 0.0 ? half : -half;
    ex = static_cast<int>(std::lround(half * c / std::abs(s)));
  }

  LineSE se;
  se.length = length;
  se.angle = angle;
  se.offsets.resize(length);
  for (int i = 0; i <= half; ++i) {
    Offset p;
    if (x_major) {
      p.dx = ex >= 0 ? i : -i;
      p.dy = round_ratio(i, ey, half);
    } else {
      p.dy = ey >= 0 ? i : -i;
      p.dx = round_ratio(i, ex, half);
    }
    se.offsets[half + i] = p;
    se.offsets[half - i] = Offset{-p.dx, -p.dy};
  }
  return se;
}

GrayImage16 erode(const GrayImage16& image, const std::vector<Offset>& se) {
  return apply_offsets(image, se, 65535, MinOp{}, +1);
}

GrayImage16 dilate(const GrayImage16& image, const std::vector<Offset>& se) {
  // max over o with x - o inside the support
  return apply_offsets(image, se, 0, MaxOp{}, -1);
}

GrayImage16 open(const GrayImage16& image, const std::vector<Offset>& se) {
  return dilate(erode(image, se), se);
}

GrayImage16 sup_opening(const GrayImage16& image, int length, int n_orientations) {
  if (n_orientations < 1) throw InvalidArgument("sup_opening: n_orientations must be >= 1");
  GrayImage16 acc(image.width, image.height, 0);
  for (int k = 0; k < n_orientations; ++k) {
    const LineSE se = make_line_se(length, k * std::numbers::pi / n_orientations);
    const GrayImage16 o = open(image, se.offsets);
    for (std::size_t i = 0; i < acc.pixels.size(); ++i) {
      acc.pixels[i] = std::max(acc.pixels[i], o.pixels[i]);
    }
  }
  return acc;
}

std::vector<ScaleBand> default_bands() {
  return {{1, 11, 19}, {2, 19, 35}, {3, 35, 62}, {4, 62, 108}};
}

int odd_ceil(int d) { return d % 2 == 0 ? d + 1 : d; }

namespace {

void validate_band(const ScaleBand& b) {
  if (b.d_min < 3 || b.d_min >= b.d_max) {
    throw InvalidArgument("scale band " + std::to_string(b.index) +
                          ": requires 3 <= d_min < d_max");
  }
}

GrayImage16 difference(const GrayImage16& a, const GrayImage16& b) {
  GrayImage16 out(a.width, a.height);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = a.pixels[i] > b.pixels[i] ? static_cast<std::uint16_t>(a.pixels[i] - b.pixels[i])
                                              : 0;
  }
  return out;
}

}  // namespace

void validate_bands(const std::vector<ScaleBand>& bands) {
  if (bands.empty()) throw InvalidArgument("sift: band list is empty");
  for (std::size_t k = 0; k < bands.size(); ++k) {
    validate_band(bands[k]);
    if (k + 1 < bands.size() && bands[k].d_max != bands[k + 1].d_min) {
      throw InvalidArgument("sift: bands " + std::to_string(bands[k].index) + " and " +
                            std::to_string(bands[k + 1].index) + " are not contiguous");
    }
  }
}

GrayImage16 sift_scale(const GrayImage16& image, const ScaleBand& band, int n_orientations) {
  validate_band(band);
  return difference(sup_opening(image, odd_ceil(band.d_min), n_orientations),
                    sup_opening(image, odd_ceil(band.d_max), n_orientations));
}

SiftedStack sift_multiscale(const GrayImage16& image, const std::vector<ScaleBand>& bands,
                            int n_orientations) {
  validate_bands(bands);
  std::map<int, GrayImage16> openings;
  auto opening = [&](int d) -> const GrayImage16& {
    const int len = odd_ceil(d);
    auto it = openings.find(len);
    if (it == openings.end()) {
      it = openings.emplace(len, sup_opening(image, len, n_orientations)).first;
    }
    return it->second;
  };
  SiftedStack stack;
  stack.bands = bands;
  for (const auto& b : bands) {
    stack.images.push_back(difference(opening(b.d_min), opening(b.d_max)));
  }
  return stack;
}

}  // namespace masscade
