#include "masscade/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "masscade/case_io.hpp"
#include "masscade/error.hpp"
#include "masscade/random.hpp"

namespace masscade {

std::vector<FoldSplit> kfold_by_image(const std::vector<std::string>& case_ids, int k,
                                      double val_fraction, std::uint64_t seed) {
  const std::size_t n = case_ids.size();
  if (k < 2) throw InvalidArgument("kfold_by_image: k must be >= 2");
  if (static_cast<std::size_t>(k) > n) {
    throw InvalidArgument("kfold_by_image: k = " + std::to_string(k) + " exceeds " +
                          std::to_string(n) + " cases");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw InvalidArgument("kfold_by_image: val_fraction must be in (0, 1)");
  }
  if (n - (n + k - 1) / k < 2) {
    throw InvalidArgument("kfold_by_image: " + std::to_string(n) +
                          " cases leave no room for training and validation with k = " +
                          std::to_string(k));
  }
  std::vector<std::string> ids = case_ids;
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw InvalidArgument("kfold_by_image: duplicate case id");
  }
  Rng rng(seed);
  rng.shuffle(ids);

  const std::size_t base = n / k, extra = n % k;
  std::vector<FoldSplit> folds;
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t len = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    FoldSplit s;
    s.fold_index = f;
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < n; ++i) {
      if (i >= pos && i < pos + len) {
        s.test_case_ids.push_back(ids[i]);
      } else {
        rest.push_back(ids[i]);
      }
    }
    pos += len;
    Rng vr(derive_seed(seed, static_cast<std::uint64_t>(f)));
    vr.shuffle(rest);
    std::size_t n_val = static_cast<std::size_t>(
        std::max<long>(1, std::lround(val_fraction * static_cast<double>(rest.size()))));
    n_val = std::min(n_val, rest.size() - 1);
    s.validation_case_ids.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train_case_ids.assign(rest.begin() + static_cast<std::ptrdiff_t>(n_val), rest.end());
    std::sort(s.test_case_ids.begin(), s.test_case_ids.end());
    std::sort(s.validation_case_ids.begin(), s.validation_case_ids.end());
    std::sort(s.train_case_ids.begin(), s.train_case_ids.end());
    folds.push_back(std::move(s));
  }
  return folds;
}

MatchResult match_predictions(const std::vector<ScoredRegion>& preds,
                              const std::vector<MassAnnotation>& masses, double dice_min,
                              double merge_iou) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].probability > preds[b].probability;
  });
  std::vector<std::size_t> kept;
  for (auto i : order) {
    bool dup = false;
    for (auto j : kept) {
      if (iou(preds[i].pixels, preds[j].pixels) > merge_iou) {
        dup = true;
        break;
      }
    }
    if (!dup) kept.push_back(i);
  }

  struct Pair {
    double dice;
    std::size_t mass, pred;
  };
  std::vector<Pair> pairs;
  for (std::size_t m = 0; m < masses.size(); ++m) {
    for (auto p : kept) {
      const double d = dice(preds[p].pixels, masses[m].rasterized);
      if (d >= dice_min && d > 0.0) pairs.push_back({d, m, p});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const Pair& a, const Pair& b) { return a.dice > b.dice; });
  std::vector<bool> mass_used(masses.size()), pred_used(preds.size());
  MatchResult r;
  for (const auto& pr : pairs) {
    if (mass_used[pr.mass] || pred_used[pr.pred]) continue;
    mass_used[pr.mass] = true;
    pred_used[pr.pred] = true;
    r.matched.emplace_back(pr.mass, pr.pred);
  }
  r.tp = static_cast<int>(r.matched.size());
  r.fn = static_cast<int>(masses.size()) - r.tp;
  r.fp = static_cast<int>(kept.size()) - r.tp;
  return r;
}

std::vector<double> observed_thresholds(const std::vector<CaseScores>& cases) {
  std::vector<double> t;
  for (const auto& c : cases) {
    for (const auto& p : c.predictions) t.push_back(p.probability);
  }
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

namespace {

struct Box {
  int x0, y0, x1, y1;  // inclusive
};

Box bounds(const PixelSet& p) {
  Box b{p.width, p.height, -1, -1};
  for (auto i : p.indices) {
    const int x = static_cast<int>(i % p.width), y = static_cast<int>(i / p.width);
    b.x0 = std::min(b.x0, x);
    b.y0 = std::min(b.y0, y);
    b.x1 = std::max(b.x1, x);
    b.y1 = std::max(b.y1, y);
  }
  return b;
}

bool disjoint(const Box& a, const Box& b) {
  return a.x1 < b.x0 || b.x1 < a.x0 || a.y1 < b.y0 || b.y1 < a.y0;
}

// Threshold-independent part of match_predictions for one case. Raising the
// threshold removes a suffix of the score order, and whether a prediction
// survives the merge depends only on higher-scored ones, so survivors and
// their Dice pairs are computed once.
struct CasePlan {
  std::vector<double> survivor_prob;  // descending
  struct Pair {
    double dice;
    std::size_t mass, rank;  // rank among survivors
  };
  std::vector<Pair> pairs;  // descending Dice, ties in match_predictions order
  std::size_t n_masses = 0;
};

CasePlan plan_case(const CaseScores& c, double dice_min, double merge_iou) {
  const auto& preds = c.predictions;
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].probability > preds[b].probability;
  });
  std::vector<Box> box(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) box[i] = bounds(preds[i].pixels);

  CasePlan plan;
  plan.n_masses = c.masses.size();
  std::vector<std::size_t> kept;
  for (auto i : order) {
    bool dup = false;
    for (auto j : kept) {
      if (disjoint(box[i], box[j])) continue;
      if (iou(preds[i].pixels, preds[j].pixels) > merge_iou) {
        dup = true;
        break;
      }
    }
    if (dup) continue;
    kept.push_back(i);
    plan.survivor_prob.push_back(preds[i].probability);
  }
  for (std::size_t m = 0; m < c.masses.size(); ++m) {
    const PixelSet mass = PixelSet::from_mask(c.masses[m].rasterized);
    const Box mb = bounds(mass);
    for (std::size_t r = 0; r < kept.size(); ++r) {
      if (disjoint(mb, box[kept[r]])) continue;
      const double d = dice(preds[kept[r]].pixels, c.masses[m].rasterized);
      if (d >= dice_min && d > 0.0) plan.pairs.push_back({d, m, r});
    }
  }
  std::stable_sort(plan.pairs.begin(), plan.pairs.end(),
                   [](const CasePlan::Pair& a, const CasePlan::Pair& b) { return a.dice > b.dice; });
  return plan;
}

}  // namespace

std::vector<FrocPoint> froc(const std::vector<CaseScores>& cases, std::vector<double> thresholds,
                            double dice_min, double merge_iou) {
  if (thresholds.empty()) thresholds = observed_thresholds(cases);
  std::sort(thresholds.begin(), thresholds.end());
  std::size_t total_masses = 0;
  std::vector<CasePlan> plans;
  plans.reserve(cases.size());
  for (const auto& c : cases) {
    total_masses += c.masses.size();
    plans.push_back(plan_case(c, dice_min, merge_iou));
  }

  std::vector<FrocPoint> curve;
  curve.reserve(thresholds.size());
  std::vector<std::uint8_t> mass_used, pred_used;
  for (double th : thresholds) {
    long tp = 0, fp = 0;
    for (const auto& plan : plans) {
      // survivors with probability >= th form a prefix
      const std::size_t n_kept = static_cast<std::size_t>(
          std::partition_point(plan.survivor_prob.begin(), plan.survivor_prob.end(),
                               [&](double p) { return p >= th; }) -
          plan.survivor_prob.begin());
      mass_used.assign(plan.n_masses, 0);
      pred_used.assign(n_kept, 0);
      long case_tp = 0;
      for (const auto& pr : plan.pairs) {
        if (pr.rank >= n_kept || mass_used[pr.mass] || pred_used[pr.rank]) continue;
        mass_used[pr.mass] = 1;
        pred_used[pr.rank] = 1;
        ++case_tp;
      }
      tp += case_tp;
      fp += static_cast<long>(n_kept) - case_tp;
    }
    FrocPoint pt;
    pt.threshold = th;
    pt.tpr = total_masses ? static_cast<double>(tp) / static_cast<double>(total_masses) : 0.0;
    pt.fpi = cases.empty() ? 0.0 : static_cast<double>(fp) / static_cast<double>(cases.size());
    curve.push_back(pt);
  }
  return curve;
}

double tpr_at_fpi(const std::vector<FrocPoint>& curve, double max_fpi) {
  double best = 0.0;
  for (const auto& p : curve) {
    if (p.fpi <= max_fpi) best = std::max(best, p.tpr);
  }
  return best;
}

void write_froc_csv(const std::filesystem::path& path, const std::vector<FrocPoint>& curve) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "threshold,tpr,fpi\n";
  char buf[96];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.threshold, p.tpr, p.fpi);
    out << buf;
  }
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<FrocPoint> read_froc_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "threshold,tpr,fpi") throw DataError("bad FROC header in " + path.string());
  std::vector<FrocPoint> curve;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    FrocPoint p;
    char c1 = 0, c2 = 0;
    std::istringstream ss(line);
    if (!(ss >> p.threshold >> c1 >> p.tpr >> c2 >> p.fpi) || c1 != ',' || c2 != ',') {
      throw DataError("malformed FROC row in " + path.string());
    }
    curve.push_back(p);
  }
  return curve;
}

HeatMap heatmap(const std::vector<ScoredRegion>& regions, int width, int height,
                HeatmapCombine combine) {
  if (width < 1 || height < 1) throw InvalidArgument("heatmap: empty dimensions");
  HeatMap map;
  map.width = width;
  map.height = height;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  map.values.assign(n, 0.0);
  std::vector<int> count(n, 0);
  for (const auto& r : regions) {
    if (r.pixels.width != width || r.pixels.height != height) {
      throw InvalidArgument("heatmap: region dimensions differ from the map");
    }
    for (auto i : r.pixels.indices) {
      if (combine == HeatmapCombine::mean) {
        map.values[i] += r.probability;
      } else {
        map.values[i] = std::max(map.values[i], r.probability);
      }
      ++count[i];
    }
  }
  if (combine == HeatmapCombine::mean) {
    for (std::size_t i = 0; i < n; ++i) {
      if (count[i] > 0) map.values[i] /= count[i];
    }
  }
  return map;
}

namespace {

std::uint8_t to8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

void write_heatmap_png(const std::filesystem::path& path, const HeatMap& map) {
  std::vector<std::uint8_t> px(map.values.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = to8(map.values[i]);
  write_png8(path, map.width, map.height, px);
}

void write_heatmap_overlay(const std::filesystem::path& path, const GrayImage16& image,
                           const HeatMap& map, const std::vector<MassAnnotation>& masses) {
  if (image.width != map.width || image.height != map.height) {
    throw InvalidArgument("heatmap overlay: image and map dimensions differ");
  }
  const int w = map.width, h = map.height, W = 2 * w;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(W) * h * 3);
  auto put = [&](int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    std::uint8_t* p = &rgb[(static_cast<std::size_t>(y) * W + x) * 3];
    p[0] = r;
    p[1] = g;
    p[2] = b;
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto g = static_cast<std::uint8_t>(image.at(x, y) >> 8);
      put(x, y, g, g, g);
      const std::uint8_t v = to8(map.at(x, y));
      put(w + x, y, v, v, v);
    }
  }
  for (const auto& m : masses) {
    const BinaryMask& r = m.rasterized;
    if (r.width != w || r.height != h) continue;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!r.at(x, y)) continue;
        const bool edge = x == 0 || y == 0 || x == w - 1 || y == h - 1 || !r.at(x - 1, y) ||
                          !r.at(x + 1, y) || !r.at(x, y - 1) || !r.at(x, y + 1);
        if (!edge) continue;
        put(x, y, 0, 255, 0);
        put(w + x, y, 0, 255, 0);
      }
    }
  }
  write_png_rgb(path, W, h, rgb);
}

}  // namespace masscade
