#include "masscade/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "masscade/cascade.hpp"
#include "masscade/case_io.hpp"
#include "masscade/error.hpp"
#include "masscade/eval.hpp"
#include "masscade/phantom.hpp"
#include "masscade/random.hpp"

namespace masscade {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kDetectionDice = 0.45;

// Re-throws the active exception with a prefix, keeping its category.
[[noreturn]] void rethrow_with(const std::string& prefix) {
  try {
    throw;
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const PipelineError& e) {
    throw PipelineError(prefix + e.what());
  } catch (const std::exception& e) {
    throw PipelineError(prefix + e.what());
  }
}

std::string case_context(const std::string& stage, const std::string& case_id) {
  return "stage '" + stage + "', case '" + case_id + "': ";
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw DataError("cannot create directory " + p.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw DataError("cannot parse " + path.string() + ": " + e.what());
  }
}

void write_manifest(const fs::path& dir, const std::vector<std::string>& ids) {
  write_text(dir / "manifest.json", json{{"cases", ids}}.dump(1) + "\n");
}

std::vector<std::string> require_cases(const fs::path& dir, const std::string& what) {
  if (!fs::is_directory(dir)) {
    throw DataError("missing " + what + " directory " + dir.string());
  }
  return list_cases(dir);
}

fs::path band_path(const fs::path& sift_dir, const std::string& case_id, int index) {
  return sift_dir / case_id / ("band_" + std::to_string(index) + ".png");
}

SiftedStack read_stack(const fs::path& sift_dir, const std::string& case_id,
                       const std::vector<ScaleBand>& bands) {
  SiftedStack s;
  s.bands = bands;
  for (const auto& b : bands) s.images.push_back(read_png16(band_path(sift_dir, case_id, b.index)));
  return s;
}

std::vector<Candidate> read_candidates(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file " + path.string());
  std::vector<Candidate> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(candidate_from_jsonl(line));
  }
  return out;
}

fs::path model_path(const fs::path& train_dir, int fold) {
  char name[32];
  std::snprintf(name, sizeof name, "model_fold_%02d.json", fold);
  return train_dir / name;
}

// --- stages ---------------------------------------------------------------

void stage_preprocess(const StageContext& ctx) {
  const auto ids = require_cases(ctx.data_dir, "dataset");
  const fs::path out = ctx.out_root / "preprocess";
  ensure_dir(out);
  parallel_for(ids.size(), ctx.jobs, [&](std::size_t i) {
    try {
      const MammogramCase c = load_case(ctx.data_dir, ids[i]);
      save_case(preprocess_case(c, ctx.config.preprocess), out);
    } catch (...) {
      rethrow_with(case_context("preprocess", ids[i]));
    }
  });
  write_manifest(out, ids);
}

void stage_sift(const StageContext& ctx) {
  const fs::path in = ctx.in_root / "preprocess";
  const auto ids = require_cases(in, "preprocess");
  const fs::path out = ctx.out_root / "sift";
  ensure_dir(out);
  parallel_for(ids.size(), ctx.jobs, [&](std::size_t i) {
    try {
      const MammogramCase c = load_case(in, ids[i]);
      const SiftedStack s =
          sift_multiscale(c.image, ctx.config.sift.bands, ctx.config.sift.n_orientations);
      ensure_dir(out / ids[i]);
      for (std::size_t k = 0; k < s.images.size(); ++k) {
        write_png16(band_path(out, ids[i], s.bands[k].index), s.images[k]);
      }
    } catch (...) {
      rethrow_with(case_context("sift", ids[i]));
    }
  });
  write_manifest(out, ids);
}

struct CandidateCounts {
  long raw_positive = 0, raw_negative = 0, kept_positive = 0, kept_negative = 0;
  long masses = 0, masses_detected = 0;
};

void stage_candidates(const StageContext& ctx) {
  const fs::path pre = ctx.in_root / "preprocess", sift = ctx.in_root / "sift";
  const auto ids = require_cases(pre, "preprocess");
  const fs::path out = ctx.out_root / "candidates";
  ensure_dir(out);
  const SlicConfig& sc = ctx.config.superpixel;
  std::vector<CandidateCounts> counts(ids.size());
  parallel_for(ids.size(), ctx.jobs, [&](std::size_t i) {
    try {
      const MammogramCase c = load_case(pre, ids[i]);
      const SiftedStack stack = read_stack(sift, ids[i], ctx.config.sift.bands);
      auto cands = label_candidates(extract_candidates(stack, c.breast_mask, sc, c.case_id),
                                    c.masses, sc.dice_threshold_per_scale);
      CandidateCounts& n = counts[i];
      for (const auto& x : cands) {
        (x.label == CandidateLabel::positive ? n.raw_positive : n.raw_negative) += 1;
      }
      cands = redundancy_filter(std::move(cands), c.breast_mask, sc);
      std::string text;
      for (const auto& x : cands) {
        (x.label == CandidateLabel::positive ? n.kept_positive : n.kept_negative) += 1;
        text += candidate_to_jsonl(x) + "\n";
      }
      n.masses = static_cast<long>(c.masses.size());
      for (const auto& m : c.masses) {
        for (const auto& x : cands) {
          if (x.label == CandidateLabel::positive && x.matched_mass_id == m.id &&
              x.best_dice > kDetectionDice) {
            ++n.masses_detected;
            break;
          }
        }
      }
      write_text(out / (ids[i] + ".jsonl"), text);
    } catch (...) {
      rethrow_with(case_context("candidates", ids[i]));
    }
  });
  json per_case = json::object();
  CandidateCounts total;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& n = counts[i];
    per_case[ids[i]] = {{"raw_positive", n.raw_positive},   {"raw_negative", n.raw_negative},
                        {"kept_positive", n.kept_positive}, {"kept_negative", n.kept_negative},
                        {"masses", n.masses},               {"masses_detected", n.masses_detected}};
    total.raw_positive += n.raw_positive;
    total.raw_negative += n.raw_negative;
    total.kept_positive += n.kept_positive;
    total.kept_negative += n.kept_negative;
    total.masses += n.masses;
    total.masses_detected += n.masses_detected;
  }
  const json summary = {{"cases", per_case},
                        {"total",
                         {{"raw_positive", total.raw_positive},
                          {"raw_negative", total.raw_negative},
                          {"kept_positive", total.kept_positive},
                          {"kept_negative", total.kept_negative},
                          {"masses", total.masses},
                          {"masses_detected", total.masses_detected}}}};
  write_text(out / "summary.json", summary.dump(1) + "\n");
  write_manifest(out, ids);
}

void stage_features(const StageContext& ctx) {
  const fs::path pre = ctx.in_root / "preprocess", sift = ctx.in_root / "sift",
                 cand = ctx.in_root / "candidates";
  const auto ids = require_cases(pre, "preprocess");
  const fs::path out = ctx.out_root / "features";
  ensure_dir(out);
  std::vector<std::vector<FeatureRow>> per_case(ids.size());
  parallel_for(ids.size(), ctx.jobs, [&](std::size_t i) {
    try {
      const GrayImage16 clahe_image = read_png16(pre / ids[i] / "image.png");
      const SiftedStack stack = read_stack(sift, ids[i], ctx.config.sift.bands);
      for (const auto& c : read_candidates(cand / (ids[i] + ".jsonl"))) {
        FeatureRow row;
        row.features = assemble_vector(c, clahe_image, stack, ctx.config.features);
        row.case_id = c.case_id;
        row.scale = c.scale_index;
        row.label = c.label;
        per_case[i].push_back(std::move(row));
      }
    } catch (...) {
      rethrow_with(case_context("features", ids[i]));
    }
  });
  std::vector<FeatureRow> rows;
  for (auto& v : per_case) {
    for (auto& r : v) rows.push_back(std::move(r));
  }
  write_feature_csv(out / "features.csv", rows);
}

// Feature rows grouped by case id, in file order.
std::map<std::string, std::vector<FeatureRow>> rows_by_case(const fs::path& csv) {
  std::map<std::string, std::vector<FeatureRow>> by_case;
  for (auto& r : read_feature_csv(csv)) by_case[r.case_id].push_back(std::move(r));
  return by_case;
}

json folds_json(const std::vector<FoldSplit>& folds) {
  json arr = json::array();
  for (const auto& f : folds) {
    arr.push_back({{"fold", f.fold_index},
                   {"train", f.train_case_ids},
                   {"validation", f.validation_case_ids},
                   {"test", f.test_case_ids}});
  }
  return arr;
}

std::vector<FoldSplit> folds_from_json(const json& j) {
  std::vector<FoldSplit> folds;
  try {
    for (const auto& f : j) {
      FoldSplit s;
      f.at("fold").get_to(s.fold_index);
      f.at("train").get_to(s.train_case_ids);
      f.at("validation").get_to(s.validation_case_ids);
      f.at("test").get_to(s.test_case_ids);
      folds.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed folds.json: ") + e.what());
  }
  return folds;
}

void stage_train(const StageContext& ctx) {
  const auto ids = require_cases(ctx.in_root / "preprocess", "preprocess");
  const auto by_case = rows_by_case(ctx.in_root / "features" / "features.csv");
  const fs::path out = ctx.out_root / "train";
  ensure_dir(out);
  const auto folds = kfold_by_image(ids, ctx.config.eval.k, ctx.config.eval.val_fraction,
                                    ctx.config.seed);
  write_text(out / "folds.json", folds_json(folds).dump(1) + "\n");
  const std::string hash = fnv1a_hex(canonical_config_text(ctx.config));

  parallel_for(folds.size(), ctx.jobs, [&](std::size_t fi) {
    const FoldSplit& f = folds[fi];
    try {
      Matrix T, F, Xv;
      std::vector<int> yv;
      for (const auto& id : f.train_case_ids) {
        auto it = by_case.find(id);
        if (it == by_case.end()) continue;
        for (const auto& r : it->second) {
          (r.label == CandidateLabel::positive ? T : F).push_back(r.features.values);
        }
      }
      for (const auto& id : f.validation_case_ids) {
        auto it = by_case.find(id);
        if (it == by_case.end()) continue;
        for (const auto& r : it->second) {
          Xv.push_back(r.features.values);
          yv.push_back(r.label == CandidateLabel::positive ? 1 : -1);
        }
      }
      if (T.empty()) throw PipelineError("cascade starved of positives (no positive candidates)");
      if (F.empty()) throw PipelineError("no negative training candidates");
      if (Xv.empty()) throw PipelineError("validation cases produced no candidates");
      CascadeModel m = train_cascade(
          T, F, ctx.config.cascade.svm,
          derive_seed(ctx.config.cascade.seed, static_cast<std::uint64_t>(f.fold_index)), Xv, yv);
      m.feature_names = feature_names();
      m.config_hash = hash;
      save_cascade(model_path(out, f.fold_index), m);
    } catch (...) {
      rethrow_with("stage 'train', fold " + std::to_string(f.fold_index) + ": ");
    }
  });
}

void stage_predict(const StageContext& ctx) {
  const fs::path cand = ctx.in_root / "candidates", train = ctx.in_root / "train";
  const auto by_case = rows_by_case(ctx.in_root / "features" / "features.csv");
  const auto folds = folds_from_json(read_json_file(train / "folds.json"));
  const std::string hash = fnv1a_hex(canonical_config_text(ctx.config));
  const fs::path out = ctx.out_root / "predict";
  ensure_dir(out);

  struct Job {
    std::string case_id;
    int fold;
  };
  std::vector<Job> jobs;
  for (const auto& f : folds) {
    for (const auto& id : f.test_case_ids) jobs.push_back({id, f.fold_index});
  }
  std::sort(jobs.begin(), jobs.end(),
            [](const Job& a, const Job& b) { return a.case_id < b.case_id; });
  std::map<int, CascadeModel> models;
  for (const auto& f : folds) {
    CascadeModel m = load_cascade(model_path(train, f.fold_index));
    if (m.feature_names != feature_names()) {
      throw DataError("model " + model_path(train, f.fold_index).string() +
                      " was trained on a different feature list");
    }
    if (m.config_hash != hash) {
      throw DataError("model " + model_path(train, f.fold_index).string() +
                      " was trained with a different configuration");
    }
    models.emplace(f.fold_index, std::move(m));
  }

  std::vector<std::string> text(jobs.size());
  parallel_for(jobs.size(), ctx.jobs, [&](std::size_t i) {
    const Job& job = jobs[i];
    try {
      const auto cands = read_candidates(cand / (job.case_id + ".jsonl"));
      static const std::vector<FeatureRow> none;
      auto it = by_case.find(job.case_id);
      const auto& rows = it == by_case.end() ? none : it->second;
      if (rows.size() != cands.size()) {
        throw DataError("features and candidates are out of sync (" + std::to_string(rows.size()) +
                        " rows, " + std::to_string(cands.size()) + " candidates)");
      }
      const CascadeModel& model = models.at(job.fold);
      for (std::size_t k = 0; k < cands.size(); ++k) {
        if (rows[k].scale != cands[k].scale_index) {
          throw DataError("features and candidates are out of sync at row " + std::to_string(k));
        }
        const Prediction p = cascade_score(model, rows[k].features);
        json j = json::parse(candidate_to_jsonl(cands[k]));
        j["fold"] = job.fold;
        j["survived_stage"] = p.survived_stage;
        j["probability"] = p.probability;
        text[i] += j.dump() + "\n";
      }
    } catch (...) {
      rethrow_with(case_context("predict", job.case_id));
    }
  });
  std::string all;
  for (const auto& t : text) all += t;
  write_text(out / "predictions.jsonl", all);
}

// Predictions grouped by case: only case_id, probability and the pixel set
// (width, height, rle) are required per line.
std::map<std::string, std::vector<ScoredRegion>> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file " + path.string());
  std::map<std::string, std::vector<ScoredRegion>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      ScoredRegion r;
      r.probability = j.at("probability").get<double>();
      if (!(r.probability >= 0.0 && r.probability <= 1.0)) {
        throw DataError("probability outside [0, 1]");
      }
      r.pixels = decode_rle(j.at("rle").get<std::vector<std::uint32_t>>(),
                            j.at("width").get<int>(), j.at("height").get<int>());
      out[j.at("case_id").get<std::string>()].push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void stage_froc(const StageContext& ctx) {
  const fs::path pre = ctx.in_root / "preprocess";
  const auto ids = require_cases(pre, "preprocess");
  auto preds = read_predictions(ctx.in_root / "predict" / "predictions.jsonl");
  for (const auto& [id, v] : preds) {
    if (!std::binary_search(ids.begin(), ids.end(), id)) {
      throw DataError("predictions refer to unknown case '" + id + "'");
    }
  }
  std::vector<CaseScores> cases(ids.size());
  parallel_for(ids.size(), ctx.jobs, [&](std::size_t i) {
    try {
      cases[i].case_id = ids[i];
      cases[i].masses = load_case_masses(pre, ids[i]);
      auto it = preds.find(ids[i]);
      if (it != preds.end()) cases[i].predictions = it->second;
    } catch (...) {
      rethrow_with(case_context("froc", ids[i]));
    }
  });
  const auto curve = froc(cases, {}, ctx.config.eval.dice_min, ctx.config.eval.merge_iou);
  const fs::path out = ctx.out_root / "froc";
  ensure_dir(out);
  write_froc_csv(out / "froc.csv", curve);
  std::size_t masses = 0;
  for (const auto& c : cases) masses += c.masses.size();
  json at = json::object();
  for (double f : {0.1, 0.5, 1.0, 2.0}) {
    char key[16];
    std::snprintf(key, sizeof key, "%.1f", f);
    at[key] = tpr_at_fpi(curve, f);
  }
  const json summary = {{"cases", cases.size()}, {"masses", masses}, {"tpr_at_fpi", at}};
  write_text(out / "summary.json", summary.dump(1) + "\n");
}

void stage_heatmap(const StageContext& ctx) {
  const fs::path pre = ctx.in_root / "preprocess";
  const auto ids = require_cases(pre, "preprocess");
  const auto preds = read_predictions(ctx.in_root / "predict" / "predictions.jsonl");
  const fs::path out = ctx.out_root / "heatmap";
  ensure_dir(out);
  parallel_for(ids.size(), ctx.jobs, [&](std::size_t i) {
    try {
      const MammogramCase c = load_case(pre, ids[i]);
      static const std::vector<ScoredRegion> none;
      auto it = preds.find(ids[i]);
      const HeatMap map = heatmap(it == preds.end() ? none : it->second, c.image.width,
                                  c.image.height, ctx.config.eval.heatmap_combine);
      write_heatmap_png(out / (ids[i] + ".png"), map);
      write_heatmap_overlay(out / (ids[i] + "_overlay.png"), c.image, map, c.masses);
    } catch (...) {
      rethrow_with(case_context("heatmap", ids[i]));
    }
  });
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"preprocess", "sift",    "candidates", "features",
                                                 "train",      "predict", "froc",       "heatmap"};
  return names;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void cmd_synth(const PipelineConfig& config, const fs::path& out_dir, int jobs) {
  config.validate();
  ensure_dir(out_dir);
  const SynthConfig& s = config.synth;
  std::vector<std::string> ids(static_cast<std::size_t>(s.n_cases));
  parallel_for(ids.size(), jobs, [&](std::size_t i) {
    const PhantomSpec spec = suite_case_spec(config.seed, static_cast<int>(i), s.width, s.height,
                                             s.max_masses, s.diameter_range_px);
    ids[i] = spec.case_id;
    try {
      save_case(generate_phantom(spec), out_dir);
    } catch (...) {
      rethrow_with(case_context("synth", spec.case_id));
    }
  });
  write_manifest(out_dir, ids);
}

void run_stage(const std::string& stage, const StageContext& ctx) {
  ctx.config.validate();
  try {
    if (stage == "preprocess") {
      stage_preprocess(ctx);
    } else if (stage == "sift") {
      stage_sift(ctx);
    } else if (stage == "candidates") {
      stage_candidates(ctx);
    } else if (stage == "features") {
      stage_features(ctx);
    } else if (stage == "train") {
      stage_train(ctx);
    } else if (stage == "predict") {
      stage_predict(ctx);
    } else if (stage == "froc") {
      stage_froc(ctx);
    } else if (stage == "heatmap") {
      stage_heatmap(ctx);
    } else {
      throw InvalidArgument("unknown stage '" + stage + "'");
    }
  } catch (const InvalidArgument&) {
    throw;
  } catch (const Error& e) {
    if (std::string(e.what()).rfind("stage '", 0) == 0) throw;
    rethrow_with("stage '" + stage + "': ");
  }
}

void cmd_run(const StageContext& ctx) {
  StageContext c = ctx;
  c.in_root = ctx.out_root;
  for (const auto& s : stage_names()) run_stage(s, c);
}

}  // namespace masscade
