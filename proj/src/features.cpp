#include "masscade/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "masscade/error.hpp"

namespace masscade {

namespace {

constexpr int kHistogramBins = 64;
constexpr double kRatioEpsilon = 1e-6 * 65535.0;

// 8-neighbourhood, clockwise in image coordinates (y down), starting east.
constexpr int kDx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
constexpr int kDy[8] = {0, 1, 1, 1, 0, -1, -1, -1};

// Region rasterized into its bounding box with a one-pixel background frame.
struct LocalMask {
  int x0 = 0, y0 = 0, w = 0, h = 0;
  std::vector<std::uint8_t> bits;

  explicit LocalMask(const PixelSet& r) {
    int xmin = r.width, xmax = -1, ymin = r.height, ymax = -1;
    for (auto i : r.indices) {
      const int x = static_cast<int>(i % r.width), y = static_cast<int>(i / r.width);
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
    x0 = xmin - 1;
    y0 = ymin - 1;
    w = xmax - xmin + 3;
    h = ymax - ymin + 3;
    bits.assign(static_cast<std::size_t>(w) * h, 0);
    for (auto i : r.indices) {
      const int x = static_cast<int>(i % r.width) - x0, y = static_cast<int>(i / r.width) - y0;
      bits[static_cast<std::size_t>(y) * w + x] = 1;
    }
  }
  bool on(int lx, int ly) const {
    return lx >= 0 && ly >= 0 && lx < w && ly < h && bits[static_cast<std::size_t>(ly) * w + lx];
  }
};

double trace_contour(const LocalMask& m, int sx, int sy) {
  // Moore-neighbour tracing. The start is the first region pixel in raster
  // order, so its west neighbour is background. Tracing stops when the first
  // move out of the start pixel is about to repeat; entry-direction tests
  // alone never fire on one-pixel-wide diagonals.
  int px = sx, py = sy;
  int bx = sx - 1, by = sy;
  int fx = 0, fy = 0;
  double length = 0.0;
  const std::size_t guard = 8 * m.bits.size() + 8;
  for (std::size_t steps = 0; steps < guard; ++steps) {
    int s = 0;
    for (; s < 8; ++s) {
      if (px + kDx[s] == bx && py + kDy[s] == by) break;
    }
    int found = -1;
    for (int i = 1; i <= 8; ++i) {
      const int d = (s + i) % 8;
      if (m.on(px + kDx[d], py + kDy[d])) {
        found = d;
        const int prev = (s + i - 1) % 8;
        bx = px + kDx[prev];
        by = py + kDy[prev];
        break;
      }
    }
    if (found < 0) return 0.0;  // isolated pixel
    const int nx = px + kDx[found], ny = py + kDy[found];
    if (steps == 0) {
      fx = nx;
      fy = ny;
    } else if (px == sx && py == sy && nx == fx && ny == fy) {
      break;
    }
    px = nx;
    py = ny;
    length += (found % 2 == 0) ? 1.0 : std::numbers::sqrt2;
  }
  return length;
}

double cross(double ox, double oy, double ax, double ay, double bx, double by) {
  return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox);
}

std::vector<double> region_values(const PixelSet& region, const GrayImage16& image) {
  if (region.width != image.width || region.height != image.height) {
    throw InvalidArgument("feature extraction: region and image dimensions differ");
  }
  std::vector<double> v;
  v.reserve(region.size());
  for (auto i : region.indices) v.push_back(image.pixels[i]);
  return v;
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = {
      // shape
      "area", "perimeter", "circularity", "eccentricity", "solidity", "extent", "radius",
      // intensity histogram on the CLAHE image
      "mean", "smoothness", "uniformity", "entropy", "skew", "kurtosis",
      // co-occurrence texture on the native-scale sifted image
      "contrast", "correlation", "angular_second_moment", "energy", "dissimilarity",
      "homogeneity", "glcm_variance",
      // cross-scale
      "s_ratio_12", "s_ratio_23"};
  return names;
}

double chain_perimeter(const PixelSet& region) {
  if (region.empty()) return 0.0;
  const LocalMask m(region);
  // Trace every 8-connected component once, from its first pixel in raster order.
  std::vector<std::uint8_t> seen(m.bits.size(), 0);
  std::vector<int> stack;
  double total = 0.0;
  for (int y = 0; y < m.h; ++y) {
    for (int x = 0; x < m.w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * m.w + x;
      if (!m.bits[i] || seen[i]) continue;
      total += trace_contour(m, x, y);
      seen[i] = 1;
      stack.push_back(static_cast<int>(i));
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        const int px = p % m.w, py = p / m.w;
        for (int d = 0; d < 8; ++d) {
          const int qx = px + kDx[d], qy = py + kDy[d];
          if (!m.on(qx, qy)) continue;
          const std::size_t q = static_cast<std::size_t>(qy) * m.w + qx;
          if (!seen[q]) {
            seen[q] = 1;
            stack.push_back(static_cast<int>(q));
          }
        }
      }
    }
  }
  return total;
}

double convex_hull_area(const PixelSet& region) {
  if (region.empty()) return 0.0;
  // Extreme pixels of each row contribute their outer corners.
  std::vector<std::pair<double, double>> pts;
  std::size_t k = 0;
  while (k < region.indices.size()) {
    const int y = static_cast<int>(region.indices[k] / region.width);
    const int xl = static_cast<int>(region.indices[k] % region.width);
    std::size_t j = k;
    while (j + 1 < region.indices.size() &&
           static_cast<int>(region.indices[j + 1] / region.width) == y) {
      ++j;
    }
    const int xr = static_cast<int>(region.indices[j] % region.width);
    pts.push_back({xl, y});
    pts.push_back({xl, y + 1.0});
    pts.push_back({xr + 1.0, y});
    pts.push_back({xr + 1.0, y + 1.0});
    k = j + 1;
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return 0.0;
  // Andrew's monotone chain.
  std::vector<std::pair<double, double>> hull(2 * pts.size());
  std::size_t n = 0;
  for (const auto& p : pts) {
    while (n >= 2 && cross(hull[n - 2].first, hull[n - 2].second, hull[n - 1].first,
                           hull[n - 1].second, p.first, p.second) <= 0) {
      --n;
    }
    hull[n++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = n + 1; i-- > 0;) {
    const auto& p = pts[i];
    while (n >= lower && cross(hull[n - 2].first, hull[n - 2].second, hull[n - 1].first,
                               hull[n - 1].second, p.first, p.second) <= 0) {
      --n;
    }
    hull[n++] = p;
  }
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    area += hull[i].first * hull[i + 1].second - hull[i + 1].first * hull[i].second;
  }
  return std::abs(area) / 2.0;
}

ShapeFeatures shape_features(const PixelSet& region) {
  if (region.empty()) throw InvalidArgument("shape_features: empty region");
  ShapeFeatures f;
  const double area = static_cast<double>(region.size());
  f.area = area;
  f.radius = std::sqrt(area / std::numbers::pi);

  f.perimeter = chain_perimeter(region);
  if (f.perimeter <= 0.0) f.perimeter = 4.0 * f.radius;
  f.circularity = 4.0 * std::numbers::pi * area / (f.perimeter * f.perimeter);

  int xmin = region.width, xmax = -1, ymin = region.height, ymax = -1;
  double sx = 0, sy = 0;
  for (auto i : region.indices) {
    const int x = static_cast<int>(i % region.width), y = static_cast<int>(i / region.width);
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
    sx += x;
    sy += y;
  }
  f.extent = area / (static_cast<double>(xmax - xmin + 1) * (ymax - ymin + 1));
  f.solidity = area / convex_hull_area(region);

  const double mx = sx / area, my = sy / area;
  double cxx = 0, cyy = 0, cxy = 0;
  for (auto i : region.indices) {
    const double dx = static_cast<double>(i % region.width) - mx;
    const double dy = static_cast<double>(i / region.width) - my;
    cxx += dx * dx;
    cyy += dy * dy;
    cxy += dx * dy;
  }
  cxx /= area;
  cyy /= area;
  cxy /= area;
  const double tr = cxx + cyy;
  const double disc = std::sqrt(std::max(0.0, 0.25 * (cxx - cyy) * (cxx - cyy) + cxy * cxy));
  const double l1 = 0.5 * tr + disc, l2 = std::max(0.0, 0.5 * tr - disc);
  f.eccentricity = l1 > 0.0 ? std::sqrt(std::max(0.0, 1.0 - l2 / l1)) : 0.0;
  return f;
}

HistogramFeatures histogram_features(const PixelSet& region, const GrayImage16& image) {
  if (region.empty()) throw InvalidArgument("histogram_features: empty region");
  const std::vector<double> raw = region_values(region, image);
  const double n = static_cast<double>(raw.size());
  HistogramFeatures f;

  std::array<double, kHistogramBins> hist{};
  double sum = 0.0;
  for (double v : raw) {
    hist[static_cast<std::size_t>(v) >> 10] += 1.0;
    sum += v;
  }
  for (double c : hist) {
    if (c == 0.0) continue;
    const double q = c / n;
    f.uniformity += q * q;
    f.entropy -= q * std::log2(q);
  }

  f.mean = sum / n / 65535.0;
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  if (*lo == *hi) return f;  // zero variance: smoothness, skew, kurtosis stay 0

  double m2 = 0, m3 = 0, m4 = 0;
  for (double v : raw) {
    const double d = v / 65535.0 - f.mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  f.smoothness = 1.0 - 1.0 / (1.0 + m2);
  f.skew = m3 / std::pow(m2, 1.5);
  f.kurtosis = m4 / (m2 * m2) - 3.0;
  return f;
}

GlcmMatrix glcm(const PixelSet& region, const GrayImage16& image, int levels, int distance,
                const std::vector<GlcmAngle>& angles) {
  if (levels < 2) throw InvalidArgument("glcm: levels must be >= 2");
  if (distance < 1) throw InvalidArgument("glcm: distance must be >= 1");
  if (region.width != image.width || region.height != image.height) {
    throw InvalidArgument("glcm: region and image dimensions differ");
  }
  GlcmMatrix g;
  g.levels = levels;
  const std::size_t cells = static_cast<std::size_t>(levels) * levels;
  g.p.assign(cells, 0.0);
  if (region.empty()) {
    std::fill(g.p.begin(), g.p.end(), 1.0 / static_cast<double>(cells));
    g.degenerate = true;
    return g;
  }

  std::uint16_t lo = 65535, hi = 0;
  for (auto i : region.indices) {
    lo = std::min(lo, image.pixels[i]);
    hi = std::max(hi, image.pixels[i]);
  }
  const LocalMask m(region);
  // Quantized level per local pixel, -1 outside the region.
  std::vector<int> level(m.bits.size(), -1);
  for (auto i : region.indices) {
    const int x = static_cast<int>(i % region.width) - m.x0;
    const int y = static_cast<int>(i / region.width) - m.y0;
    int q = 0;
    if (hi > lo) {
      q = static_cast<int>(static_cast<long long>(image.pixels[i] - lo) * levels / (hi - lo));
      q = std::min(q, levels - 1);
    }
    level[static_cast<std::size_t>(y) * m.w + x] = q;
  }

  int used = 0;
  std::vector<double> counts(cells);
  for (GlcmAngle a : angles) {
    int dx = 0, dy = 0;
    switch (a) {
      case GlcmAngle::deg0: dx = distance; break;
      case GlcmAngle::deg45: dx = distance; dy = -distance; break;
      case GlcmAngle::deg90: dy = -distance; break;
      case GlcmAngle::deg135: dx = -distance; dy = -distance; break;
    }
    std::fill(counts.begin(), counts.end(), 0.0);
    double total = 0.0;
    for (int y = 0; y < m.h; ++y) {
      for (int x = 0; x < m.w; ++x) {
        const int a0 = level[static_cast<std::size_t>(y) * m.w + x];
        if (a0 < 0) continue;
        const int qx = x + dx, qy = y + dy;
        if (qx < 0 || qy < 0 || qx >= m.w || qy >= m.h) continue;
        const int b0 = level[static_cast<std::size_t>(qy) * m.w + qx];
        if (b0 < 0) continue;
        counts[static_cast<std::size_t>(a0) * levels + b0] += 1.0;
        counts[static_cast<std::size_t>(b0) * levels + a0] += 1.0;
        total += 2.0;
      }
    }
    if (total == 0.0) continue;
    ++used;
    for (std::size_t c = 0; c < cells; ++c) g.p[c] += counts[c] / total;
  }
  if (used == 0) {
    std::fill(g.p.begin(), g.p.end(), 1.0 / static_cast<double>(cells));
    g.degenerate = true;
    return g;
  }
  for (auto& v : g.p) v /= used;
  return g;
}

GlcmFeatures glcm_features(const GlcmMatrix& g) {
  GlcmFeatures f;
  const int L = g.levels;
  double mu_i = 0, mu_j = 0, asm_raw = 0;
  for (int i = 0; i < L; ++i) {
    for (int j = 0; j < L; ++j) {
      const double p = g.at(i, j);
      const double d = i - j;
      f.contrast += d * d * p;
      f.dissimilarity += std::abs(d) * p;
      f.homogeneity += p / (1.0 + std::abs(d));
      asm_raw += p * p;
      mu_i += i * p;
      mu_j += j * p;
    }
  }
  double var_i = 0, var_j = 0, cov = 0;
  for (int i = 0; i < L; ++i) {
    for (int j = 0; j < L; ++j) {
      const double p = g.at(i, j);
      var_i += (i - mu_i) * (i - mu_i) * p;
      var_j += (j - mu_j) * (j - mu_j) * p;
      cov += (i - mu_i) * (j - mu_j) * p;
    }
  }
  // ASM is derived from energy so that energy^2 == ASM holds bit-exactly.
  f.energy = std::sqrt(asm_raw);
  f.angular_second_moment = f.energy * f.energy;
  f.variance = var_i;
  const double si = std::sqrt(var_i), sj = std::sqrt(var_j);
  f.correlation = (si > 1e-12 && sj > 1e-12) ? cov / (si * sj) : 0.0;
  return f;
}

std::array<double, 2> scale_ratio_features(const PixelSet& region, const SiftedStack& stack) {
  if (stack.images.size() < 3) throw InvalidArgument("scale_ratio_features: needs >= 3 scales");
  if (region.empty()) throw InvalidArgument("scale_ratio_features: empty region");
  double s[3];
  for (int k = 0; k < 3; ++k) {
    double sum = 0.0;
    for (double v : region_values(region, stack.images[k])) sum += v;
    s[k] = sum / static_cast<double>(region.size());
  }
  auto ratio = [](double a, double b) { return a < kRatioEpsilon ? 0.0 : (a - b) / a; };
  return {ratio(s[0], s[1]), ratio(s[1], s[2])};
}

FeatureVector assemble_vector(const Candidate& candidate, const GrayImage16& clahe_image,
                              const SiftedStack& stack, const FeatureParams& params) {
  const PixelSet& r = candidate.pixels;
  const GrayImage16* native = nullptr;
  for (std::size_t k = 0; k < stack.bands.size(); ++k) {
    if (stack.bands[k].index == candidate.scale_index) native = &stack.images[k];
  }
  if (!native) {
    throw InvalidArgument("assemble_vector: candidate scale " +
                          std::to_string(candidate.scale_index) + " is not in the stack");
  }
  const ShapeFeatures s = shape_features(r);
  const HistogramFeatures h = histogram_features(r, clahe_image);
  const GlcmFeatures t =
      glcm_features(glcm(r, *native, params.glcm_levels, params.glcm_distance));
  const auto ratios = scale_ratio_features(r, stack);

  FeatureVector fv;
  fv.values = {s.area,         s.perimeter,   s.circularity,   s.eccentricity,
               s.solidity,     s.extent,      s.radius,        h.mean,
               h.smoothness,   h.uniformity,  h.entropy,       h.skew,
               h.kurtosis,     t.contrast,    t.correlation,   t.angular_second_moment,
               t.energy,       t.dissimilarity, t.homogeneity, t.variance,
               ratios[0],      ratios[1]};
  for (std::size_t i = 0; i < fv.values.size(); ++i) {
    if (!std::isfinite(fv.values[i])) {
      throw PipelineError("feature '" + feature_names()[i] + "' is not finite for a candidate of " +
                          candidate.case_id);
    }
  }
  return fv;
}

double quantize_feature(double v) { return std::strtod(format_value(v).c_str(), nullptr); }

void write_feature_csv(const std::filesystem::path& path, const std::vector<FeatureRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& name : feature_names()) out << name << ',';
  out << "case_id,scale,label\n";
  for (const auto& row : rows) {
    if (row.features.values.size() != kFeatureCount) {
      throw InvalidArgument("write_feature_csv: feature vector has wrong length");
    }
    for (double v : row.features.values) out << format_value(v) << ',';
    out << row.case_id << ',' << row.scale << ',' << to_string(row.label) << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<FeatureRow> read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file " + path.string());
  std::string line;
  std::getline(in, line);
  std::string expected;
  for (const auto& name : feature_names()) expected += name + ',';
  expected += "case_id,scale,label";
  if (line != expected) {
    throw DataError("feature table header does not match " + std::string(kFeatureVersion) + ": " +
                    path.string());
  }
  std::vector<FeatureRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != kFeatureCount + 3) throw DataError("malformed feature row in " + path.string());
    FeatureRow row;
    try {
      for (std::size_t i = 0; i < kFeatureCount; ++i) row.features.values.push_back(std::stod(cells[i]));
      row.case_id = cells[kFeatureCount];
      row.scale = std::stoi(cells[kFeatureCount + 1]);
      row.label = candidate_label_from_string(cells[kFeatureCount + 2]);
    } catch (const std::exception& e) {
      throw DataError("malformed feature row in " + path.string() + ": " + e.what());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace masscade
