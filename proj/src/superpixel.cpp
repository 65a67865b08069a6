#include "masscade/superpixel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "masscade/error.hpp"

namespace masscade {

using nlohmann::json;

namespace {

struct Center {
  double x, y, l;
};

// Union-find over connected components, tracking group sizes.
struct Groups {
  std::vector<int> parent;
  std::vector<std::size_t> size;

  explicit Groups(const std::vector<std::size_t>& sizes) : parent(sizes.size()), size(sizes) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  }
  void merge_into(int small, int big) {
    small = find(small);
    big = find(big);
    if (small == big) return;
    parent[small] = big;
    size[big] += size[small];
  }
};

// 4-connected components of a label map; returns per-pixel component ids.
std::vector<int> connected_components(const std::vector<std::int32_t>& labels, int w, int h,
                                      std::vector<std::size_t>& sizes) {
  std::vector<int> comp(labels.size(), -1);
  std::vector<int> stack;
  sizes.clear();
  for (std::size_t start = 0; start < labels.size(); ++start) {
    if (comp[start] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    const std::int32_t lab = labels[start];
    std::size_t n = 0;
    comp[start] = id;
    stack.push_back(static_cast<int>(start));
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      ++n;
      const int x = p % w, y = p / w;
      const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[1] < 0 || q[0] >= w || q[1] >= h) continue;
        const int qi = q[1] * w + q[0];
        if (comp[qi] < 0 && labels[qi] == lab) {
          comp[qi] = id;
          stack.push_back(qi);
        }
      }
    }
    sizes.push_back(n);
  }
  return comp;
}

}  // namespace

SuperpixelMap slic(const GrayImage16& image, int k, double compactness, double sigma,
                   int iterations) {
  const int w = image.width, h = image.height;
  const long long n_pixels = static_cast<long long>(w) * h;
  if (k < 1) throw InvalidArgument("slic: k must be >= 1");
  if (k > n_pixels) throw InvalidArgument("slic: k exceeds the pixel count");
  if (!(compactness > 0.0)) throw InvalidArgument("slic: compactness must be > 0");
  if (iterations < 0) throw InvalidArgument("slic: iterations must be >= 0");

  FloatImage f = gaussian_blur(to_float(image), sigma);
  for (auto& v : f.pixels) v = static_cast<float>(v * (100.0 / 65535.0));

  const double step = std::sqrt(static_cast<double>(n_pixels) / k);

  // Staggered seed grid: adjacent rows are offset by half a column.
  const int rows = std::max(1, static_cast<int>(std::lround(h / step)));
  const int cols = std::max(1, static_cast<int>(std::lround(static_cast<double>(k) / rows)));
  const double cw = static_cast<double>(w) / cols, rh = static_cast<double>(h) / rows;
  auto grad = [&](int x, int y) {
    const float gx = f.at(std::min(x + 1, w - 1), y) - f.at(std::max(x - 1, 0), y);
    const float gy = f.at(x, std::min(y + 1, h - 1)) - f.at(x, std::max(y - 1, 0));
    return static_cast<double>(gx) * gx + static_cast<double>(gy) * gy;
  };
  std::vector<Center> centers;
  centers.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    const double shift = rows > 1 ? (r % 2 == 0 ? -0.25 : 0.25) : 0.0;
    const int y = std::clamp(static_cast<int>((r + 0.5) * rh), 0, h - 1);
    for (int c = 0; c < cols; ++c) {
      const int x = std::clamp(static_cast<int>((c + 0.5 + shift) * cw), 0, w - 1);
      int bx = x, by = y;
      double best = grad(x, y);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          const double g = grad(xx, yy);
          if (g < best) {
            best = g;
            bx = xx;
            by = yy;
          }
        }
      }
      centers.push_back({static_cast<double>(bx), static_cast<double>(by), f.at(bx, by)});
    }
  }

  std::vector<std::int32_t> labels(n_pixels, -1);
  std::vector<double> dist(n_pixels);
  const double spatial = (compactness / step) * (compactness / step);
  const int radius = static_cast<int>(std::ceil(step));
  for (int it = 0; it < std::max(1, iterations); ++it) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      const Center& c = centers[ci];
      const int cx = static_cast<int>(std::lround(c.x)), cy = static_cast<int>(std::lround(c.y));
      const int x0 = std::max(0, cx - radius), x1 = std::min(w - 1, cx + radius);
      const int y0 = std::max(0, cy - radius), y1 = std::min(h - 1, cy + radius);
      for (int y = y0; y <= y1; ++y) {
        const double ddy = y - c.y;
        for (int x = x0; x <= x1; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          const double dl = f.pixels[i] - c.l;
          const double ddx = x - c.x;
          const double d = dl * dl + spatial * (ddx * ddx + ddy * ddy);
          if (d < dist[i]) {
            dist[i] = d;
            labels[i] = static_cast<std::int32_t>(ci);
          }
        }
      }
    }
    if (it + 1 >= iterations) break;
    std::vector<double> sx(centers.size(), 0.0), sy(centers.size(), 0.0), sl(centers.size(), 0.0);
    std::vector<std::size_t> cnt(centers.size(), 0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const int lab = labels[i];
        if (lab < 0) continue;
        sx[lab] += x;
        sy[lab] += y;
        sl[lab] += f.pixels[i];
        ++cnt[lab];
      }
    }
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      if (cnt[ci] == 0) continue;
      const double n = static_cast<double>(cnt[ci]);
      centers[ci] = {sx[ci] / n, sy[ci] / n, sl[ci] / n};
    }
  }

  // Pixels outside every search window take the spatially nearest center.
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) continue;
    const double x = static_cast<double>(i % w), y = static_cast<double>(i / w);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      const double d = (centers[ci].x - x) * (centers[ci].x - x) +
                       (centers[ci].y - y) * (centers[ci].y - y);
      if (d < best) {
        best = d;
        labels[i] = static_cast<std::int32_t>(ci);
      }
    }
  }

  // Connectivity: merge components below S^2/4 into their largest neighbour.
  std::vector<std::size_t> sizes;
  const std::vector<int> comp = connected_components(labels, w, h, sizes);
  const std::size_t min_size = static_cast<std::size_t>(step * step / 4.0);
  std::vector<std::vector<int>> adjacent(sizes.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int a = comp[static_cast<std::size_t>(y) * w + x];
      if (x + 1 < w) {
        const int b = comp[static_cast<std::size_t>(y) * w + x + 1];
        if (a != b) {
          adjacent[a].push_back(b);
          adjacent[b].push_back(a);
        }
      }
      if (y + 1 < h) {
        const int b = comp[static_cast<std::size_t>(y + 1) * w + x];
        if (a != b) {
          adjacent[a].push_back(b);
          adjacent[b].push_back(a);
        }
      }
    }
  }
  std::vector<int> small;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    if (sizes[c] < min_size) small.push_back(static_cast<int>(c));
  }
  std::stable_sort(small.begin(), small.end(),
                   [&](int a, int b) { return sizes[a] < sizes[b]; });
  Groups groups(sizes);
  for (int c : small) {
    const int root = groups.find(c);
    if (groups.size[root] >= min_size) continue;
    int target = -1;
    std::size_t target_size = 0;
    for (int nb : adjacent[c]) {
      const int r = groups.find(nb);
      if (r == root) continue;
      if (target < 0 || groups.size[r] > target_size ||
          (groups.size[r] == target_size && r < target)) {
        target = r;
        target_size = groups.size[r];
      }
    }
    if (target >= 0) groups.merge_into(root, target);
  }

  SuperpixelMap out;
  out.width = w;
  out.height = h;
  out.labels.assign(n_pixels, -1);
  std::vector<int> relabel(sizes.size(), -1);
  int next = 0;
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    const int root = groups.find(comp[i]);
    if (relabel[root] < 0) relabel[root] = next++;
    out.labels[i] = relabel[root];
  }
  out.k_actual = next;
  return out;
}

const char* to_string(CandidateLabel label) {
  switch (label) {
    case CandidateLabel::positive:
      return "positive";
    case CandidateLabel::negative:
      return "negative";
    case CandidateLabel::unlabeled:
      break;
  }
  return "unlabeled";
}

CandidateLabel candidate_label_from_string(const std::string& s) {
  if (s == "positive") return CandidateLabel::positive;
  if (s == "negative") return CandidateLabel::negative;
  if (s == "unlabeled") return CandidateLabel::unlabeled;
  throw InvalidArgument("unknown candidate label '" + s + "'");
}

void SlicConfig::validate(std::size_t n_scales) const {
  auto check_len = [&](std::size_t len, const char* name, bool allow_empty) {
    if ((len == 0 && allow_empty) || len == n_scales) return;
    throw InvalidArgument(std::string("superpixel: ") + name + " must list one value per scale");
  };
  check_len(superpixels_per_scale.size(), "superpixels_per_scale", true);
  check_len(compactness_per_scale.size(), "compactness_per_scale", true);
  check_len(dice_threshold_per_scale.size(), "dice_threshold_per_scale", false);
  for (int k : superpixels_per_scale) {
    if (k < 1) throw InvalidArgument("superpixel: superpixel counts must be >= 1");
  }
  for (double c : compactness_per_scale) {
    if (!(c > 0.0)) throw InvalidArgument("superpixel: compactness must be > 0");
  }
  if (!(compactness_c0 > 0.0)) throw InvalidArgument("superpixel: compactness_c0 must be > 0");
  if (!(smoothing_sigma >= 0.0)) throw InvalidArgument("superpixel: smoothing_sigma must be >= 0");
  if (iterations < 1) throw InvalidArgument("superpixel: iterations must be >= 1");
  for (double t : dice_threshold_per_scale) {
    if (!(t > 0.0 && t <= 1.0)) {
      throw InvalidArgument("superpixel: dice thresholds must lie in (0, 1]");
    }
  }
  if (!(intensity_percentile >= 0.0 && intensity_percentile < 100.0)) {
    throw InvalidArgument("superpixel: intensity_percentile must lie in [0, 100)");
  }
  if (!(min_breast_fraction >= 0.0 && min_breast_fraction <= 1.0)) {
    throw InvalidArgument("superpixel: min_breast_fraction must lie in [0, 1]");
  }
}

int default_superpixel_count(int width, int height, const ScaleBand& band) {
  const double d_mid = std::sqrt(static_cast<double>(band.d_min) * band.d_max);
  const double area = static_cast<double>(width) * height;
  const long long k = std::llround(area / (std::numbers::pi * 0.25 * d_mid * d_mid));
  return static_cast<int>(std::clamp<long long>(k, 1, static_cast<long long>(area)));
}

double adaptive_compactness(const GrayImage16& scale_image, double c0) {
  const auto [lo, hi] = std::minmax_element(scale_image.pixels.begin(), scale_image.pixels.end());
  // a flat image still needs a positive factor; treat its range as one level
  const double range = std::max(1.0, static_cast<double>(*hi - *lo));
  return c0 * range / 65535.0;
}

std::vector<Candidate> extract_candidates(const SiftedStack& stack, const BinaryMask& breast_mask,
                                          const SlicConfig& cfg, const std::string& case_id) {
  cfg.validate(stack.images.size());
  std::vector<Candidate> out;
  for (std::size_t s = 0; s < stack.images.size(); ++s) {
    const GrayImage16& img = stack.images[s];
    if (img.width != breast_mask.width || img.height != breast_mask.height) {
      throw InvalidArgument("extract_candidates: stack and breast mask dimensions differ");
    }
    const int k = cfg.superpixels_per_scale.empty()
                      ? default_superpixel_count(img.width, img.height, stack.bands[s])
                      : cfg.superpixels_per_scale[s];
    const double m = cfg.compactness_per_scale.empty()
                         ? adaptive_compactness(img, cfg.compactness_c0)
                         : cfg.compactness_per_scale[s];
    const SuperpixelMap sp = slic(img, k, m, cfg.smoothing_sigma, cfg.iterations);

    std::vector<Candidate> cands(sp.k_actual);
    std::vector<double> sum_x(sp.k_actual, 0.0), sum_y(sp.k_actual, 0.0), sum_v(sp.k_actual, 0.0);
    for (std::size_t i = 0; i < sp.labels.size(); ++i) {
      const int lab = sp.labels[i];
      cands[lab].pixels.indices.push_back(static_cast<std::uint32_t>(i));
      sum_x[lab] += static_cast<double>(i % img.width);
      sum_y[lab] += static_cast<double>(i / img.width);
      sum_v[lab] += img.pixels[i];
    }
    for (int lab = 0; lab < sp.k_actual; ++lab) {
      Candidate& c = cands[lab];
      const double n = static_cast<double>(c.pixels.size());
      c.case_id = case_id;
      c.scale_index = stack.bands[s].index;
      c.pixels.width = img.width;
      c.pixels.height = img.height;
      c.centroid = {sum_x[lab] / n, sum_y[lab] / n};
      c.mean_sifted_intensity = sum_v[lab] / n;
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::vector<Candidate> label_candidates(std::vector<Candidate> cands,
                                        const std::vector<MassAnnotation>& masses,
                                        const std::vector<double>& thresholds) {
  for (double t : thresholds) {
    if (!(t > 0.0 && t <= 1.0)) throw InvalidArgument("label_candidates: thresholds must be in (0,1]");
  }
  std::vector<std::size_t> mass_area;
  for (const auto& m : masses) mass_area.push_back(m.rasterized.count());
  for (auto& c : cands) {
    if (c.scale_index < 1 || static_cast<std::size_t>(c.scale_index) > thresholds.size()) {
      throw InvalidArgument("label_candidates: no threshold for scale " +
                            std::to_string(c.scale_index));
    }
    c.best_dice = 0.0;
    c.matched_mass_id.reset();
    std::size_t best = masses.size();
    for (std::size_t k = 0; k < masses.size(); ++k) {
      const BinaryMask& mm = masses[k].rasterized;
      if (mm.width != c.pixels.width || mm.height != c.pixels.height) {
        throw InvalidArgument("label_candidates: mass and candidate dimensions differ");
      }
      std::size_t inter = 0;
      for (auto i : c.pixels.indices) inter += mm.bits[i] != 0;
      const std::size_t denom = c.pixels.size() + mass_area[k];
      const double d = denom == 0 ? 0.0 : 2.0 * static_cast<double>(inter) / denom;
      if (d > c.best_dice) {
        c.best_dice = d;
        best = k;
      }
    }
    const bool pos = c.best_dice >= thresholds[c.scale_index - 1];
    c.label = pos ? CandidateLabel::positive : CandidateLabel::negative;
    if (pos && best < masses.size()) c.matched_mass_id = masses[best].id;
  }
  return cands;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::map<CohortKey, double> cohort_intensity_cutoffs(const std::vector<Candidate>& cands,
                                                     double pct) {
  std::map<CohortKey, std::vector<double>> groups;
  for (const auto& c : cands) groups[{c.case_id, c.scale_index}].push_back(c.mean_sifted_intensity);
  std::map<CohortKey, double> out;
  for (auto& [key, values] : groups) out[key] = percentile(std::move(values), pct);
  return out;
}

std::vector<Candidate> apply_redundancy_filter(std::vector<Candidate> cands,
                                               const BinaryMask& breast_mask,
                                               const std::map<CohortKey, double>& cutoffs,
                                               double min_breast_fraction) {
  std::vector<Candidate> out;
  for (auto& c : cands) {
    if (c.pixels.width != breast_mask.width || c.pixels.height != breast_mask.height) {
      throw InvalidArgument("redundancy_filter: candidate and breast mask dimensions differ");
    }
    if (c.pixels.empty()) continue;
    std::size_t inside = 0;
    for (auto i : c.pixels.indices) inside += breast_mask.bits[i] != 0;
    const double fraction = static_cast<double>(inside) / static_cast<double>(c.pixels.size());
    if (fraction < min_breast_fraction) continue;
    const auto it = cutoffs.find({c.case_id, c.scale_index});
    if (it != cutoffs.end() && c.mean_sifted_intensity < it->second) continue;
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<Candidate> redundancy_filter(std::vector<Candidate> cands,
                                         const BinaryMask& breast_mask, const SlicConfig& cfg) {
  const auto cutoffs = cohort_intensity_cutoffs(cands, cfg.intensity_percentile);
  return apply_redundancy_filter(std::move(cands), breast_mask, cutoffs, cfg.min_breast_fraction);
}

std::vector<std::uint32_t> encode_rle(const PixelSet& pixels) {
  std::vector<std::uint32_t> runs;
  for (std::size_t i = 0; i < pixels.indices.size();) {
    std::size_t j = i + 1;
    while (j < pixels.indices.size() && pixels.indices[j] == pixels.indices[j - 1] + 1) ++j;
    runs.push_back(pixels.indices[i]);
    runs.push_back(static_cast<std::uint32_t>(j - i));
    i = j;
  }
  return runs;
}

PixelSet decode_rle(const std::vector<std::uint32_t>& runs, int width, int height) {
  if (runs.size() % 2 != 0) throw DataError("run-length list has odd length");
  PixelSet p;
  p.width = width;
  p.height = height;
  const std::uint64_t n = static_cast<std::uint64_t>(width) * height;
  for (std::size_t k = 0; k < runs.size(); k += 2) {
    if (static_cast<std::uint64_t>(runs[k]) + runs[k + 1] > n) {
      throw DataError("run-length entry exceeds image bounds");
    }
    if (!p.indices.empty() && runs[k] <= p.indices.back()) {
      throw DataError("run-length entries are not increasing");
    }
    for (std::uint32_t i = 0; i < runs[k + 1]; ++i) p.indices.push_back(runs[k] + i);
  }
  return p;
}

std::string candidate_to_jsonl(const Candidate& c) {
  json j;
  j["case_id"] = c.case_id;
  j["scale"] = c.scale_index;
  j["centroid"] = {c.centroid.x, c.centroid.y};
  j["area"] = c.pixels.size();
  j["label"] = to_string(c.label);
  j["best_dice"] = c.best_dice;
  j["matched_mass_id"] = c.matched_mass_id ? json(*c.matched_mass_id) : json(nullptr);
  j["mean_sifted_intensity"] = c.mean_sifted_intensity;
  j["width"] = c.pixels.width;
  j["height"] = c.pixels.height;
  j["rle"] = encode_rle(c.pixels);
  return j.dump();
}

Candidate candidate_from_jsonl(const std::string& line) {
  try {
    const json j = json::parse(line);
    Candidate c;
    c.case_id = j.at("case_id").get<std::string>();
    c.scale_index = j.at("scale").get<int>();
    c.centroid = {j.at("centroid").at(0).get<double>(), j.at("centroid").at(1).get<double>()};
    c.label = candidate_label_from_string(j.at("label").get<std::string>());
    c.best_dice = j.at("best_dice").get<double>();
    if (!j.at("matched_mass_id").is_null()) {
      c.matched_mass_id = j.at("matched_mass_id").get<std::string>();
    }
    c.mean_sifted_intensity = j.at("mean_sifted_intensity").get<double>();
    c.pixels = decode_rle(j.at("rle").get<std::vector<std::uint32_t>>(), j.at("width").get<int>(),
                          j.at("height").get<int>());
    if (c.pixels.size() != j.at("area").get<std::size_t>()) {
      throw DataError("candidate area does not match its run-length pixel set");
    }
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed candidate record: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("malformed candidate record: ") + e.what());
  }
}

}  // namespace masscade
