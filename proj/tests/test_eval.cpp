#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "masscade/case_io.hpp"
#include "masscade/error.hpp"
#include "masscade/eval.hpp"
#include "masscade/random.hpp"

using namespace masscade;

namespace {

PixelSet row_run(int w, int h, int start, int len) {
  PixelSet p{w, h, {}};
  for (int i = 0; i < len; ++i) p.indices.push_back(static_cast<std::uint32_t>(start + i));
  return p;
}

MassAnnotation mass_from(const PixelSet& p, const std::string& id) {
  MassAnnotation m;
  m.id = id;
  m.rasterized = p.to_mask();
  return m;
}

std::vector<std::string> ids(int n) {
  std::vector<std::string> v;
  for (int i = 0; i < n; ++i) v.push_back("case" + std::to_string(1000 + i));
  return v;
}

// Brute-force curve: threshold, then match each case from scratch.
FrocPoint naive_point(const std::vector<CaseScores>& cases, double t, double dice_min,
                      double merge_iou) {
  int tp = 0, fp = 0, masses = 0;
  for (const auto& c : cases) {
    std::vector<ScoredRegion> kept;
    for (const auto& p : c.predictions) {
      if (p.probability >= t) kept.push_back(p);
    }
    const auto r = match_predictions(kept, c.masses, dice_min, merge_iou);
    tp += r.tp;
    fp += r.fp;
    masses += static_cast<int>(c.masses.size());
  }
  return {t, masses ? static_cast<double>(tp) / masses : 0.0,
          static_cast<double>(fp) / static_cast<double>(cases.size())};
}

std::vector<CaseScores> random_cases(Rng& rng, int n_cases) {
  std::vector<CaseScores> cases;
  const int w = 16, h = 16;
  for (int c = 0; c < n_cases; ++c) {
    CaseScores cs;
    cs.case_id = "c" + std::to_string(c);
    const int nm = static_cast<int>(rng.below(3));
    for (int m = 0; m < nm; ++m) {
      const int x0 = static_cast<int>(rng.below(10)), y0 = static_cast<int>(rng.below(10));
      PixelSet p{w, h, {}};
      for (int y = y0; y < y0 + 5; ++y) {
        for (int x = x0; x < x0 + 5; ++x) p.indices.push_back(static_cast<std::uint32_t>(y * w + x));
      }
      cs.masses.push_back(mass_from(p, "m" + std::to_string(m)));
    }
    const int np = static_cast<int>(rng.below(8));
    for (int k = 0; k < np; ++k) {
      const int x0 = static_cast<int>(rng.below(12)), y0 = static_cast<int>(rng.below(12));
      const int sw = 2 + static_cast<int>(rng.below(5)), sh = 2 + static_cast<int>(rng.below(5));
      PixelSet p{w, h, {}};
      for (int y = y0; y < std::min(h, y0 + sh); ++y) {
        for (int x = x0; x < std::min(w, x0 + sw); ++x) {
          p.indices.push_back(static_cast<std::uint32_t>(y * w + x));
        }
      }
      // A coarse probability grid produces ties.
      cs.predictions.push_back({p, static_cast<double>(rng.below(6)) / 5.0});
    }
    cases.push_back(cs);
  }
  return cases;
}

}  // namespace

TEST_CASE("Dice threshold boundary") {
  // |A| = |B| = 100 with 19 shared pixels: Dice 0.19.
  const auto mass19 = mass_from(row_run(200, 2, 0, 100), "m");
  const auto pred19 = row_run(200, 2, 81, 100);
  const auto miss = match_predictions({{pred19, 0.9}}, {mass19}, 0.20, 0.5);
  CHECK(miss.tp == 0);
  CHECK(miss.fp == 1);
  CHECK(miss.fn == 1);

  // |A| = |B| = 10 with 2 shared pixels: Dice 0.20.
  const auto mass20 = mass_from(row_run(40, 1, 0, 10), "m");
  const auto pred20 = row_run(40, 1, 8, 10);
  const auto hit = match_predictions({{pred20, 0.9}}, {mass20}, 0.20, 0.5);
  CHECK(hit.tp == 1);
  CHECK(hit.fp == 0);
  CHECK(hit.fn == 0);
  REQUIRE(hit.matched.size() == 1);
  CHECK(hit.matched[0] == std::pair<std::size_t, std::size_t>{0, 0});
}

TEST_CASE("matching basics") {
  const auto region = row_run(30, 1, 5, 10);
  const auto mass = mass_from(region, "m");
  const auto same = match_predictions({{region, 0.7}}, {mass}, 0.2, 0.5);
  CHECK((same.tp == 1 && same.fp == 0 && same.fn == 0));
  const auto dup = match_predictions({{region, 0.7}, {region, 0.6}}, {mass}, 0.2, 0.5);
  CHECK((dup.tp == 1 && dup.fp == 0 && dup.fn == 0));
  const auto none = match_predictions({}, {mass}, 0.2, 0.5);
  CHECK((none.tp == 0 && none.fp == 0 && none.fn == 1));
  const auto nomass = match_predictions({{region, 0.7}}, {}, 0.2, 0.5);
  CHECK((nomass.tp == 0 && nomass.fp == 1 && nomass.fn == 0));
}

TEST_CASE("one prediction matches at most one mass") {
  // Two masses side by side, one prediction covering both.
  const auto a = mass_from(row_run(40, 1, 0, 10), "a");
  const auto b = mass_from(row_run(40, 1, 10, 10), "b");
  const auto r = match_predictions({{row_run(40, 1, 0, 20), 0.9}}, {a, b}, 0.2, 0.5);
  CHECK(r.tp == 1);
  CHECK(r.fn == 1);
  CHECK(r.fp == 0);
}

TEST_CASE("hand-enumerated FROC fixture") {
  const int w = 40;
  CaseScores A, B;
  A.case_id = "A";
  B.case_id = "B";
  A.masses = {mass_from(row_run(w, 1, 0, 10), "a")};
  B.masses = {mass_from(row_run(w, 1, 0, 10), "b")};
  A.predictions = {{row_run(w, 1, 5, 10), 0.9},    // Dice 0.5 on its mass
                   {row_run(w, 1, 25, 10), 0.6}};  // Dice 0
  B.predictions = {{row_run(w, 1, 7, 10), 0.4}};   // Dice 0.3
  const auto curve = froc({A, B}, {0.5}, 0.20, 0.5);
  REQUIRE(curve.size() == 1);
  CHECK(curve[0].tpr == 0.5);
  CHECK(curve[0].fpi == 0.5);

  const auto full = froc({A, B}, {}, 0.20, 0.5);
  REQUIRE(full.size() == 3);
  CHECK(full[0] == FrocPoint{0.4, 1.0, 0.5});
  CHECK(full[2] == FrocPoint{0.9, 0.5, 0.0});
  const auto ends = froc({A, B}, {0.0, 0.95}, 0.20, 0.5);
  CHECK(ends[0].tpr == 1.0);
  CHECK(ends[1].tpr == 0.0);
  CHECK(ends[1].fpi == 0.0);
  CHECK(tpr_at_fpi(full, 0.0) == 0.5);
  CHECK(tpr_at_fpi(full, 0.5) == 1.0);
}

TEST_CASE("fast FROC equals per-threshold matching") {
  Rng rng(42);
  for (int t = 0; t < 40; ++t) {
    const auto cases = random_cases(rng, 1 + static_cast<int>(rng.below(6)));
    const double dice_min = t % 2 ? 0.2 : 0.5, merge = t % 3 ? 0.5 : 0.1;
    auto thresholds = observed_thresholds(cases);
    thresholds.push_back(0.0);
    thresholds.push_back(0.55);
    thresholds.push_back(2.0);
    std::sort(thresholds.begin(), thresholds.end());
    const auto curve = froc(cases, thresholds, dice_min, merge);
    REQUIRE(curve.size() == thresholds.size());
    for (std::size_t i = 0; i < curve.size(); ++i) {
      const auto ref = naive_point(cases, thresholds[i], dice_min, merge);
      CHECK(curve[i].threshold == ref.threshold);
      CHECK(curve[i].tpr == ref.tpr);
      CHECK(curve[i].fpi == ref.fpi);
      if (i > 0) {
        CHECK(curve[i].tpr <= curve[i - 1].tpr);
        CHECK(curve[i].fpi <= curve[i - 1].fpi);
      }
    }
  }
}

TEST_CASE("matching conserves counts") {
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    const auto cases = random_cases(rng, 1);
    const auto& c = cases[0];
    const auto r = match_predictions(c.predictions, c.masses, 0.2, 0.5);
    CHECK(r.tp + r.fn == static_cast<int>(c.masses.size()));
    CHECK(r.tp + r.fp <= static_cast<int>(c.predictions.size()));
    CHECK(r.matched.size() == static_cast<std::size_t>(r.tp));
  }
}

TEST_CASE("heat maps") {
  const int w = 4, h = 1;
  const std::vector<ScoredRegion> regions{{row_run(w, h, 0, 1), 0.8},
                                          {row_run(w, h, 0, 2), 0.4},
                                          {row_run(w, h, 0, 3), 0.0},
                                          {row_run(w, h, 0, 1), 0.0}};
  const auto mean = heatmap(regions, w, h);
  CHECK(mean.at(0, 0) == doctest::Approx(0.3));
  CHECK(mean.at(1, 0) == doctest::Approx(0.2));
  CHECK(mean.at(2, 0) == 0.0);
  CHECK(mean.at(3, 0) == 0.0);
  const auto mx = heatmap(regions, w, h, HeatmapCombine::max);
  CHECK(mx.at(0, 0) == 0.8);
  CHECK(mx.at(1, 0) == 0.4);
  const auto empty = heatmap({}, 3, 3);
  CHECK(std::all_of(empty.values.begin(), empty.values.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("heat maps are bounded and monotone in the scores") {
  Rng rng(6);
  for (int t = 0; t < 30; ++t) {
    auto cases = random_cases(rng, 1);
    auto regions = cases[0].predictions;
    if (regions.empty()) continue;
    for (auto combine : {HeatmapCombine::mean, HeatmapCombine::max}) {
      const auto base = heatmap(regions, 16, 16, combine);
      double top = 0;
      for (const auto& r : regions) top = std::max(top, r.probability);
      for (double v : base.values) CHECK(v <= top + 1e-15);
      auto raised = regions;
      const std::size_t k = rng.below(raised.size());
      raised[k].probability = std::min(1.0, raised[k].probability + 0.3);
      const auto up = heatmap(raised, 16, 16, combine);
      for (std::size_t i = 0; i < up.values.size(); ++i) CHECK(up.values[i] >= base.values[i]);
    }
  }
}

TEST_CASE("heat map files") {
  const auto dir = std::filesystem::temp_directory_path() / "masscade_test_heat";
  std::filesystem::create_directories(dir);
  HeatMap m{3, 1, {0.0, 0.5, 1.0}};
  write_heatmap_png(dir / "h.png", m);
  const auto back = read_png16(dir / "h.png");
  CHECK(back.pixels == std::vector<std::uint16_t>{0, 128 * 257, 255 * 257});
  const auto mass = mass_from(row_run(3, 1, 1, 1), "m");
  write_heatmap_overlay(dir / "o.png", GrayImage16(3, 1, 30000), m, {mass});
  CHECK(std::filesystem::file_size(dir / "o.png") > 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("FROC CSV round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "masscade_test_froc";
  std::filesystem::create_directories(dir);
  const std::vector<FrocPoint> curve{{0.1, 1.0, 2.5}, {1.0 / 3.0, 0.75, 0.1}};
  write_froc_csv(dir / "f.csv", curve);
  CHECK(read_froc_csv(dir / "f.csv") == curve);
  std::filesystem::remove_all(dir);
}

TEST_CASE("folds by image") {
  const auto ten = kfold_by_image(ids(10), 10, 0.1, 1);
  REQUIRE(ten.size() == 10);
  for (const auto& f : ten) CHECK(f.validation_case_ids.size() == 1);
  for (const auto& f : ten) CHECK(f.test_case_ids.size() == 1);

  const auto big = kfold_by_image(ids(410), 10, 0.10, 9);
  for (const auto& f : big) {
    CHECK(f.test_case_ids.size() == 41);
    CHECK(f.validation_case_ids.size() == 37);
    CHECK(f.train_case_ids.size() == 410 - 41 - 37);
  }
  CHECK_THROWS_AS(kfold_by_image(ids(5), 10, 0.1, 1), InvalidArgument);
  CHECK_THROWS_AS(kfold_by_image(ids(3), 2, 0.1, 1), InvalidArgument);
  CHECK_NOTHROW(kfold_by_image(ids(4), 2, 0.1, 1));
  CHECK(kfold_by_image(ids(50), 10, 0.1, 3) == kfold_by_image(ids(50), 10, 0.1, 3));
}

TEST_CASE("fold partition properties") {
  Rng rng(12);
  for (int t = 0; t < 30; ++t) {
    const int k = 2 + static_cast<int>(rng.below(11));
    const int n = k + 2 + static_cast<int>(rng.below(50));
    const auto all = ids(n);
    const auto folds = kfold_by_image(all, k, rng.uniform(0.0, 0.5), t);
    std::multiset<std::string> tests;
    for (const auto& f : folds) {
      tests.insert(f.test_case_ids.begin(), f.test_case_ids.end());
      std::set<std::string> seen;
      for (const auto* list : {&f.train_case_ids, &f.validation_case_ids, &f.test_case_ids}) {
        CHECK(std::is_sorted(list->begin(), list->end()));
        for (const auto& id : *list) CHECK(seen.insert(id).second);
      }
      CHECK(seen.size() == all.size());
      CHECK(!f.validation_case_ids.empty());
      CHECK(!f.train_case_ids.empty());
    }
    CHECK(tests == std::multiset<std::string>(all.begin(), all.end()));
  }
}
