#pragma once
// Slow reference implementations used only by tests. Each one follows the
// textbook definition directly and shares no code with the library beyond
// the plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "masscade/image.hpp"
#include "masscade/morphosift.hpp"

namespace oracle {

using masscade::GrayImage16;
using masscade::Offset;
using masscade::PixelSet;

// --- morphology -------------------------------------------------------------

inline GrayImage16 erode(const GrayImage16& f, const std::vector<Offset>& se) {
  GrayImage16 out(f.width, f.height, 0);
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      int m = 65535;
      for (const auto& o : se) {
        const int u = x + o.dx, v = y + o.dy;
        if (u < 0 || v < 0 || u >= f.width || v >= f.height) continue;
        m = std::min<int>(m, f.at(u, v));
      }
      out.at(x, y) = static_cast<std::uint16_t>(m);
    }
  }
  return out;
}

inline GrayImage16 dilate(const GrayImage16& f, const std::vector<Offset>& se) {
  GrayImage16 out(f.width, f.height, 0);
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      int m = 0;
      for (const auto& o : se) {
        const int u = x - o.dx, v = y - o.dy;
        if (u < 0 || v < 0 || u >= f.width || v >= f.height) continue;
        m = std::max<int>(m, f.at(u, v));
      }
      out.at(x, y) = static_cast<std::uint16_t>(m);
    }
  }
  return out;
}

inline GrayImage16 sup_opening(const GrayImage16& f, int length, int n) {
  GrayImage16 acc(f.width, f.height, 0);
  for (int k = 0; k < n; ++k) {
    const auto se = masscade::make_line_se(length, k * M_PI / n).offsets;
    const GrayImage16 o = oracle::dilate(oracle::erode(f, se), se);
    for (std::size_t i = 0; i < acc.pixels.size(); ++i) {
      acc.pixels[i] = std::max(acc.pixels[i], o.pixels[i]);
    }
  }
  return acc;
}

// --- histogram statistics ---------------------------------------------------

struct Hist {
  double mean, smoothness, uniformity, entropy, skew, kurtosis;
};

inline Hist histogram(const PixelSet& r, const GrayImage16& img) {
  const long double n = static_cast<long double>(r.indices.size());
  long double s = 0;
  std::map<int, long> bins;
  std::uint16_t lo = 65535, hi = 0;
  for (auto i : r.indices) {
    const std::uint16_t v = img.pixels[i];
    s += v / 65535.0L;
    bins[v / 1024] += 1;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const long double mu = s / n;
  long double m2 = 0, m3 = 0, m4 = 0;
  for (auto i : r.indices) {
    const long double d = img.pixels[i] / 65535.0L - mu;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  Hist h{};
  h.mean = static_cast<double>(mu);
  for (const auto& [b, c] : bins) {
    const long double p = c / n;
    h.uniformity += static_cast<double>(p * p);
    h.entropy -= static_cast<double>(p * std::log2(p));
  }
  if (lo != hi) {
    h.smoothness = static_cast<double>(1.0L - 1.0L / (1.0L + m2));
    h.skew = static_cast<double>(m3 / std::pow(m2, 1.5L));
    h.kurtosis = static_cast<double>(m4 / (m2 * m2) - 3.0L);
  }
  return h;
}

// --- co-occurrence ----------------------------------------------------------

/// Symmetric GLCM by explicit pair enumeration over the four standard angles.
inline std::vector<double> glcm(const PixelSet& r, const GrayImage16& img, int L, int d) {
  const std::set<std::uint32_t> members(r.indices.begin(), r.indices.end());
  std::uint16_t lo = 65535, hi = 0;
  for (auto i : r.indices) {
    lo = std::min(lo, img.pixels[i]);
    hi = std::max(hi, img.pixels[i]);
  }
  auto level = [&](std::uint32_t i) {
    if (hi == lo) return 0;
    const long q = static_cast<long>(img.pixels[i] - lo) * L / (hi - lo);
    return static_cast<int>(std::min<long>(q, L - 1));
  };
  const int offs[4][2] = {{d, 0}, {d, -d}, {0, -d}, {-d, -d}};
  std::vector<double> acc(static_cast<std::size_t>(L) * L, 0.0);
  int used = 0;
  for (const auto& o : offs) {
    std::map<std::pair<int, int>, long> counts;
    long total = 0;
    for (auto i : r.indices) {
      const int x = static_cast<int>(i % r.width) + o[0], y = static_cast<int>(i / r.width) + o[1];
      if (x < 0 || y < 0 || x >= r.width || y >= r.height) continue;
      const auto j = static_cast<std::uint32_t>(y * r.width + x);
      if (!members.count(j)) continue;
      counts[{level(i), level(j)}] += 1;
      counts[{level(j), level(i)}] += 1;
      total += 2;
    }
    if (total == 0) continue;
    ++used;
    for (const auto& [ij, c] : counts) {
      acc[static_cast<std::size_t>(ij.first) * L + ij.second] += static_cast<double>(c) / total;
    }
  }
  if (used == 0) {
    std::fill(acc.begin(), acc.end(), 1.0 / (static_cast<double>(L) * L));
    return acc;
  }
  for (auto& v : acc) v /= used;
  return acc;
}

struct Texture {
  double contrast, correlation, asm_, energy, dissimilarity, homogeneity, variance;
};

inline Texture texture(const std::vector<double>& p, int L) {
  Texture t{};
  double mi = 0, mj = 0;
  for (int i = 0; i < L; ++i) {
    for (int j = 0; j < L; ++j) {
      const double v = p[static_cast<std::size_t>(i) * L + j];
      mi += i * v;
      mj += j * v;
    }
  }
  double vi = 0, vj = 0, cov = 0;
  for (int i = 0; i < L; ++i) {
    for (int j = 0; j < L; ++j) {
      const double v = p[static_cast<std::size_t>(i) * L + j];
      t.contrast += (i - j) * (i - j) * v;
      t.dissimilarity += std::abs(i - j) * v;
      t.homogeneity += v / (1.0 + std::abs(i - j));
      t.asm_ += v * v;
      vi += (i - mi) * (i - mi) * v;
      vj += (j - mj) * (j - mj) * v;
      cov += (i - mi) * (j - mj) * v;
    }
  }
  t.energy = std::sqrt(t.asm_);
  t.variance = vi;
  t.correlation = (vi > 1e-24 && vj > 1e-24) ? cov / std::sqrt(vi * vj) : 0.0;
  return t;
}

// --- SVM dual QP ------------------------------------------------------------

struct QpSolution {
  std::vector<double> alpha;
  double objective;  // sum(alpha) - 1/2 alpha' Q alpha
  double rho;        // decision = sum alpha_i y_i K(x_i, x) - rho
};

/// Euclidean projection onto {0 <= a <= C, y'a = 0}: a = clip(v - lambda y),
/// with the root of the piecewise-linear constraint found between breakpoints.
inline std::vector<double> project(const std::vector<double>& v, const std::vector<int>& y,
                                   double C) {
  const std::size_t n = v.size();
  auto g = [&](double lam) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += y[i] * std::clamp(v[i] - lam * y[i], 0.0, C);
    return s;
  };
  std::vector<double> bp;
  for (std::size_t i = 0; i < n; ++i) {
    bp.push_back(v[i] * y[i]);
    bp.push_back((v[i] - C) * y[i]);
  }
  std::sort(bp.begin(), bp.end());
  // g is non-increasing; bracket its root between consecutive breakpoints.
  double lam = bp.front();
  if (g(bp.front()) <= 0) {
    lam = bp.front();
  } else if (g(bp.back()) >= 0) {
    lam = bp.back();
  } else {
    for (std::size_t k = 0; k + 1 < bp.size(); ++k) {
      const double g0 = g(bp[k]), g1 = g(bp[k + 1]);
      if (g0 >= 0 && g1 <= 0) {
        lam = g0 == g1 ? bp[k] : bp[k] + (bp[k + 1] - bp[k]) * g0 / (g0 - g1);
        break;
      }
    }
  }
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = std::clamp(v[i] - lam * y[i], 0.0, C);
  return a;
}

/// Accelerated projected gradient (FISTA with restart) on the C-SVM dual.
inline QpSolution solve_dual(const std::vector<std::vector<double>>& K, const std::vector<int>& y,
                             double C, int iterations = 60000) {
  const std::size_t n = y.size();
  std::vector<std::vector<double>> Q(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) Q[i][j] = y[i] * y[j] * K[i][j];
  }
  // Lipschitz constant by power iteration.
  std::vector<double> b(n, 1.0), t(n);
  double L = 1.0;
  for (int it = 0; it < 200; ++it) {
    double norm = 0;
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = 0;
      for (std::size_t j = 0; j < n; ++j) t[i] += Q[i][j] * b[j];
      norm += t[i] * t[i];
    }
    norm = std::sqrt(norm);
    if (norm == 0) break;
    L = norm;
    for (std::size_t i = 0; i < n; ++i) b[i] = t[i] / norm;
  }
  L *= 1.01;
  auto objective = [&](const std::vector<double>& a) {
    double lin = 0, quad = 0;
    for (std::size_t i = 0; i < n; ++i) {
      lin += a[i];
      for (std::size_t j = 0; j < n; ++j) quad += a[i] * Q[i][j] * a[j];
    }
    return lin - 0.5 * quad;
  };
  std::vector<double> a(n, 0.0), z = a, prev = a, grad(n), step(n);
  double tk = 1.0, fprev = objective(a);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      grad[i] = -1.0;
      for (std::size_t j = 0; j < n; ++j) grad[i] += Q[i][j] * z[j];
      step[i] = z[i] - grad[i] / L;
    }
    a = project(step, y, C);
    const double f = objective(a);
    if (f < fprev) {  // adaptive restart
      tk = 1.0;
      z = prev;
      a = prev;
      continue;
    }
    const double tn = (1.0 + std::sqrt(1.0 + 4.0 * tk * tk)) / 2.0;
    for (std::size_t i = 0; i < n; ++i) z[i] = a[i] + (tk - 1.0) / tn * (a[i] - prev[i]);
    tk = tn;
    prev = a;
    fprev = f;
  }
  QpSolution s;
  s.alpha = prev;
  s.objective = objective(prev);
  // rho from the gradient: average over free multipliers, else the midpoint of
  // the feasible interval.
  std::vector<double> G(n);
  for (std::size_t i = 0; i < n; ++i) {
    G[i] = -1.0;
    for (std::size_t j = 0; j < n; ++j) G[i] += Q[i][j] * s.alpha[j];
  }
  const double eps = 1e-7 * C;
  double ub = INFINITY, lb = -INFINITY, sum = 0;
  int nf = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double yg = y[i] * G[i];
    if (s.alpha[i] >= C - eps) {
      if (y[i] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (s.alpha[i] <= eps) {
      if (y[i] == 1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      sum += yg;
      ++nf;
    }
  }
  s.rho = nf > 0 ? sum / nf : (ub + lb) / 2.0;
  return s;
}

}  // namespace oracle
