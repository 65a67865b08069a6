#include "masscade/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <vector>

#include "masscade/error.hpp"
#include "masscade/random.hpp"

namespace masscade {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kPolygonVertices = 48;
constexpr int kPlacementRetries = 2000;
constexpr double kMaxIntensity = 16383.0;  // phantoms mimic a 14-bit detector

struct PlacedMass {
  double cx, cy, ra, rb, theta;
};

FloatImage white_noise(Rng& rng, int w, int h) {
  FloatImage f(w, h);
  for (auto& v : f.pixels) v = static_cast<float>(rng.normal());
  return f;
}

void normalize_unit_std(FloatImage& f) {
  double mean = 0.0;
  for (float v : f.pixels) mean += v;
  mean /= static_cast<double>(f.pixels.size());
  double var = 0.0;
  for (float v : f.pixels) var += (v - mean) * (v - mean);
  var /= static_cast<double>(f.pixels.size());
  const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
  for (auto& v : f.pixels) v = static_cast<float>((v - mean) / sd);
}

std::vector<Point2> ellipse_polygon(const PlacedMass& m, double scale) {
  std::vector<Point2> poly;
  poly.reserve(kPolygonVertices);
  const double c = std::cos(m.theta), s = std::sin(m.theta);
  for (int k = 0; k < kPolygonVertices; ++k) {
    const double t = 2.0 * kPi * k / kPolygonVertices;
    const double u = scale * m.ra * std::cos(t);
    const double v = scale * m.rb * std::sin(t);
    poly.push_back({m.cx + u * c - v * s, m.cy + u * s + v * c});
  }
  return poly;
}

double distance_to_segment(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double qx = ax + t * dx - px, qy = ay + t * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

}  // namespace

void PhantomSpec::validate() const {
  if (width < 16 || height < 16) throw InvalidArgument("phantom: image must be at least 16x16");
  if (n_masses < 0 || n_masses > 4) throw InvalidArgument("phantom: n_masses must be in 0..4");
  const auto [dmin, dmax] = mass_diameter_range_px;
  if (!(dmin >= 3.0) || !(dmax >= dmin) || dmax > std::min(width, height) / 2.0) {
    throw InvalidArgument("phantom: diameter range must satisfy 3 <= min <= max <= half the image");
  }
  if (!(mass_contrast >= 0.0 && mass_contrast <= 1.0)) {
    throw InvalidArgument("phantom: mass_contrast must be in [0,1]");
  }
  if (!(noise_level >= 0.0 && noise_level <= 1.0)) {
    throw InvalidArgument("phantom: noise_level must be in [0,1]");
  }
  if (!(pixel_spacing_um > 0.0)) throw InvalidArgument("phantom: pixel spacing must be positive");
}

MammogramCase generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const int w = spec.width, h = spec.height;
  Rng rng(spec.seed);

  // Breast: half ellipse against the chest wall at x = 0.
  const double ax = 0.88 * w, by = 0.46 * h, cy = 0.5 * (h - 1);
  BinaryMask breast(w, h);
  std::vector<double> thickness(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = x / ax, v = (y - cy) / by;
      const double r2 = u * u + v * v;
      if (r2 <= 1.0) {
        breast.set(x, y);
        thickness[static_cast<std::size_t>(y) * w + x] = std::sqrt(1.0 - r2);
      }
    }
  }

  // Parenchyma: three octaves of smoothed random fields.
  FloatImage texture(w, h, 0.0f);
  const double sigmas[3] = {w / 16.0, w / 32.0, w / 64.0};
  const double weights[3] = {0.5, 0.3, 0.2};
  for (int o = 0; o < 3; ++o) {
    FloatImage field = gaussian_blur(white_noise(rng, w, h), sigmas[o]);
    normalize_unit_std(field);
    for (std::size_t i = 0; i < field.pixels.size(); ++i) {
      texture.pixels[i] += static_cast<float>(weights[o] * field.pixels[i]);
    }
  }

  std::vector<double> tissue(static_cast<std::size_t>(w) * h, 0.03);
  for (std::size_t i = 0; i < tissue.size(); ++i) {
    if (!breast.bits[i]) continue;
    const double t = thickness[i];
    tissue[i] = 0.22 + 0.28 * std::sqrt(t) + 0.05 * texture.pixels[i] * std::min(1.0, 3.0 * t);
  }

  // Masses.
  std::vector<PlacedMass> placed;
  const auto [dmin, dmax] = spec.mass_diameter_range_px;
  auto inside = [&](double x, double y) {
    const int ix = static_cast<int>(std::lround(x)), iy = static_cast<int>(std::lround(y));
    if (ix < 0 || iy < 0 || ix >= w || iy >= h) return false;
    const double u = x / ax, v = (y - cy) / by;
    return x >= 0.0 && u * u + v * v <= 1.0;
  };
  for (int k = 0; k < spec.n_masses; ++k) {
    bool ok = false;
    for (int attempt = 0; attempt < kPlacementRetries && !ok; ++attempt) {
      PlacedMass m{};
      const double d = rng.uniform(dmin, dmax);
      m.ra = 0.5 * d;
      m.rb = m.ra * rng.uniform(0.7, 1.0);
      m.theta = rng.uniform(0.0, kPi);
      m.cx = rng.uniform(0.0, ax);
      m.cy = rng.uniform(cy - by, cy + by);
      ok = true;
      PlacedMass margin = m;
      margin.ra += 3.0;
      margin.rb += 3.0;
      for (const auto& p : ellipse_polygon(margin, 1.0)) {
        if (!inside(p.x, p.y)) {
          ok = false;
          break;
        }
      }
      for (const auto& other : placed) {
        if (!ok) break;
        if (std::hypot(m.cx - other.cx, m.cy - other.cy) <= m.ra + other.ra + 4.0) ok = false;
      }
      if (ok) placed.push_back(m);
    }
    if (!ok) {
      throw PipelineError("phantom: could not place mass " + std::to_string(k + 1) + " of " +
                          std::to_string(spec.n_masses) + " inside the breast");
    }
  }

  std::vector<double> intensity = tissue;
  MammogramCase c;
  c.case_id = spec.case_id;
  c.pixel_spacing_um = spec.pixel_spacing_um;
  for (std::size_t k = 0; k < placed.size(); ++k) {
    const PlacedMass& m = placed[k];
    const double cs = std::cos(m.theta), sn = std::sin(m.theta);
    const double softness = std::max(0.06, 1.2 / m.ra);
    const int reach = static_cast<int>(std::ceil(2.0 * m.ra)) + 2;
    const int x0 = std::max(0, static_cast<int>(m.cx) - reach);
    const int x1 = std::min(w - 1, static_cast<int>(m.cx) + reach);
    const int y0 = std::max(0, static_cast<int>(m.cy) - reach);
    const int y1 = std::min(h - 1, static_cast<int>(m.cy) + reach);

    struct Ray {
      double ax, ay, bx, by;
    };
    std::vector<Ray> rays;
    if (spec.spiculation) {
      const int n_rays = 6 + static_cast<int>(rng.below(7));
      for (int r = 0; r < n_rays; ++r) {
        const double phi = rng.uniform(0.0, 2.0 * kPi);
        const double len = m.ra * rng.uniform(0.4, 0.9);
        const double ux = std::cos(phi), uy = std::sin(phi);
        const double start = 0.85 * m.rb;
        rays.push_back({m.cx + start * ux, m.cy + start * uy, m.cx + (m.ra + len) * ux,
                        m.cy + (m.ra + len) * uy});
      }
    }

    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (!breast.bits[i]) continue;
        const double dx = x - m.cx, dy = y - m.cy;
        const double u = (dx * cs + dy * sn) / m.ra;
        const double v = (-dx * sn + dy * cs) / m.rb;
        const double rho = std::sqrt(u * u + v * v);
        double profile = 1.0 / (1.0 + std::exp((rho - 1.0) / softness));
        profile *= 1.0 - 0.15 * std::min(1.0, rho * rho);
        for (const Ray& r : rays) {
          const double dist = distance_to_segment(x, y, r.ax, r.ay, r.bx, r.by);
          if (dist < 2.0) {
            const double along = std::hypot(x - r.ax, y - r.ay) /
                                 std::max(1.0, std::hypot(r.bx - r.ax, r.by - r.ay));
            const double spike = 0.5 * (1.0 - std::min(1.0, along)) * std::exp(-dist * dist);
            profile = std::max(profile, spike);
          }
        }
        intensity[i] += tissue[i] * spec.mass_contrast * profile;
      }
    }

    char id[16];
    std::snprintf(id, sizeof id, "m%d", static_cast<int>(k + 1));
    c.masses.push_back(MassAnnotation::from_polygon(id, ellipse_polygon(m, 1.0), w, h));
  }

  // Intensity-dependent quantum noise, then 14-bit quantization.
  c.image = GrayImage16(w, h);
  for (std::size_t i = 0; i < intensity.size(); ++i) {
    const double v = intensity[i];
    const double noisy = v + spec.noise_level * 0.04 * std::sqrt(std::max(v, 0.0)) * rng.normal();
    c.image.pixels[i] =
        static_cast<std::uint16_t>(std::lround(std::clamp(noisy, 0.0, 1.0) * kMaxIntensity));
  }
  c.breast_mask = std::move(breast);
  return c;
}

PhantomSpec suite_case_spec(std::uint64_t suite_seed, int index, int width, int height,
                            int max_masses, std::pair<double, double> diameter_range) {
  Rng rng(derive_seed(suite_seed, static_cast<std::uint64_t>(index)));
  PhantomSpec s;
  s.width = width;
  s.height = height;
  s.n_masses = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_masses) + 1));
  s.mass_diameter_range_px = diameter_range;
  s.mass_contrast = rng.uniform(0.25, 0.45);
  s.spiculation = rng.below(2) == 1;
  s.noise_level = rng.uniform(0.2, 0.4);
  s.seed = rng.next();
  char id[32];
  std::snprintf(id, sizeof id, "case_%03d", index);
  s.case_id = id;
  return s;
}

}  // namespace masscade
