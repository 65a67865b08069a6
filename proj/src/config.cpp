#include "masscade/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>

#include "masscade/error.hpp"

namespace masscade {

using nlohmann::json;

namespace {

// Strict accessor for one JSON object section.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw InvalidArgument("config: '" + name_ + "' must be an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    const std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : j_.items()) {
      if (!ok.count(k)) throw InvalidArgument("config: unknown key '" + name_ + "." + k + "'");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& at(const char* key) const { return j_.at(key); }

  template <typename T>
  void read(const char* key, T& out) const {
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw InvalidArgument("config: '" + name_ + "." + key + "' has the wrong type");
    }
  }

  std::string path(const char* key) const { return name_ + "." + key; }

 private:
  const json& j_;
  std::string name_;
};

}  // namespace

void PipelineConfig::validate() const {
  auto wrap = [](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(std::string("config.") + section + ": " + e.what());
    }
  };
  wrap("preprocess", [&] { preprocess.validate(); });
  wrap("sift", [&] {
    validate_bands(sift.bands);
    for (std::size_t k = 0; k < sift.bands.size(); ++k) {
      if (sift.bands[k].index != static_cast<int>(k) + 1) {
        throw InvalidArgument("band indices must be 1..n in order");
      }
    }
    if (sift.bands.size() < 3) throw InvalidArgument("at least 3 bands are needed");
    if (sift.n_orientations < 1) throw InvalidArgument("n_orientations must be >= 1");
  });
  wrap("superpixel", [&] { superpixel.validate(sift.bands.size()); });
  wrap("features", [&] {
    if (features.glcm_levels < 2 || features.glcm_levels > 256) {
      throw InvalidArgument("glcm_levels must be in [2, 256]");
    }
    if (features.glcm_distance < 1) throw InvalidArgument("glcm_distance must be >= 1");
  });
  wrap("cascade", [&] { cascade.svm.validate(); });
  wrap("eval", [&] {
    if (eval.k < 2) throw InvalidArgument("k must be >= 2");
    if (!(eval.val_fraction > 0.0 && eval.val_fraction < 1.0)) {
      throw InvalidArgument("val_fraction must be in (0, 1)");
    }
    if (!(eval.dice_min > 0.0 && eval.dice_min <= 1.0)) {
      throw InvalidArgument("dice_min must be in (0, 1]");
    }
    if (!(eval.merge_iou >= 0.0 && eval.merge_iou <= 1.0)) {
      throw InvalidArgument("merge_iou must be in [0, 1]");
    }
  });
  wrap("synth", [&] {
    if (synth.n_cases < 0) throw InvalidArgument("n_cases must be >= 0");
    if (synth.width < 64 || synth.height < 64) throw InvalidArgument("width/height must be >= 64");
    if (synth.max_masses < 0 || synth.max_masses > 4) {
      throw InvalidArgument("max_masses must be in [0, 4]");
    }
    const auto [lo, hi] = synth.diameter_range_px;
    if (!(lo >= 4.0 && hi >= lo)) throw InvalidArgument("diameter_range_px must satisfy 4 <= lo <= hi");
  });
}

PipelineConfig default_config() { return PipelineConfig{}; }

PipelineConfig phantom_config() {
  PipelineConfig cfg;
  cfg.preprocess.downsample_factor = 1;
  cfg.superpixel.intensity_percentile = 85.0;
  cfg.superpixel.dice_threshold_per_scale = {0.45, 0.45, 0.45, 0.60};
  return cfg;
}

json to_json(const PipelineConfig& c) {
  json bands = json::array();
  for (const auto& b : c.sift.bands) bands.push_back({b.d_min, b.d_max});
  json gamma = c.cascade.svm.gamma ? json(*c.cascade.svm.gamma) : json("scale");
  return {
      {"seed", c.seed},
      {"preprocess",
       {{"downsample_factor", c.preprocess.downsample_factor},
        {"clahe_clip_limit", c.preprocess.clahe_clip_limit},
        {"clahe_tiles", {c.preprocess.clahe_tile_rows, c.preprocess.clahe_tile_cols}},
        {"clahe_bins", c.preprocess.clahe_bins}}},
      {"sift", {{"bands", bands}, {"n_orientations", c.sift.n_orientations}}},
      {"superpixel",
       {{"superpixels_per_scale", c.superpixel.superpixels_per_scale},
        {"compactness_per_scale", c.superpixel.compactness_per_scale},
        {"compactness_c0", c.superpixel.compactness_c0},
        {"smoothing_sigma", c.superpixel.smoothing_sigma},
        {"iterations", c.superpixel.iterations},
        {"dice_threshold_per_scale", c.superpixel.dice_threshold_per_scale},
        {"intensity_percentile", c.superpixel.intensity_percentile},
        {"min_breast_fraction", c.superpixel.min_breast_fraction}}},
      {"features",
       {{"glcm_levels", c.features.glcm_levels}, {"glcm_distance", c.features.glcm_distance}}},
      {"cascade",
       {{"kernel", c.cascade.svm.kernel == KernelType::linear ? "linear" : "rbf"},
        {"C", c.cascade.svm.C},
        {"gamma", gamma},
        {"tolerance", c.cascade.svm.tolerance},
        {"max_passes", c.cascade.svm.max_passes},
        {"seed", c.cascade.seed}}},
      {"eval",
       {{"k", c.eval.k},
        {"val_fraction", c.eval.val_fraction},
        {"dice_min", c.eval.dice_min},
        {"merge_iou", c.eval.merge_iou},
        {"heatmap_combine", c.eval.heatmap_combine == HeatmapCombine::mean ? "mean" : "max"}}},
      {"synth",
       {{"n_cases", c.synth.n_cases},
        {"width", c.synth.width},
        {"height", c.synth.height},
        {"max_masses", c.synth.max_masses},
        {"diameter_range_px", {c.synth.diameter_range_px.first, c.synth.diameter_range_px.second}}}},
      {"paths", {{"data", c.data_dir}, {"out", c.out_dir}}}};
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  const Section root(j, "config");
  root.allow({"seed", "preprocess", "sift", "superpixel", "features", "cascade", "eval", "synth",
              "paths"});
  root.read("seed", c.seed);

  if (root.has("preprocess")) {
    const Section s(root.at("preprocess"), "preprocess");
    s.allow({"downsample_factor", "clahe_clip_limit", "clahe_tiles", "clahe_bins"});
    s.read("downsample_factor", c.preprocess.downsample_factor);
    s.read("clahe_clip_limit", c.preprocess.clahe_clip_limit);
    s.read("clahe_bins", c.preprocess.clahe_bins);
    if (s.has("clahe_tiles")) {
      std::vector<int> t;
      s.read("clahe_tiles", t);
      if (t.size() != 2) throw InvalidArgument("config: 'preprocess.clahe_tiles' must be [rows, cols]");
      c.preprocess.clahe_tile_rows = t[0];
      c.preprocess.clahe_tile_cols = t[1];
    }
  }
  if (root.has("sift")) {
    const Section s(root.at("sift"), "sift");
    s.allow({"bands", "n_orientations"});
    s.read("n_orientations", c.sift.n_orientations);
    if (s.has("bands")) {
      std::vector<std::vector<int>> b;
      s.read("bands", b);
      c.sift.bands.clear();
      for (std::size_t k = 0; k < b.size(); ++k) {
        if (b[k].size() != 2) throw InvalidArgument("config: 'sift.bands' entries must be [d_min, d_max]");
        c.sift.bands.push_back({static_cast<int>(k) + 1, b[k][0], b[k][1]});
      }
    }
  }
  if (root.has("superpixel")) {
    const Section s(root.at("superpixel"), "superpixel");
    s.allow({"superpixels_per_scale", "compactness_per_scale", "compactness_c0", "smoothing_sigma",
             "iterations", "dice_threshold_per_scale", "intensity_percentile",
             "min_breast_fraction"});
    s.read("superpixels_per_scale", c.superpixel.superpixels_per_scale);
    s.read("compactness_per_scale", c.superpixel.compactness_per_scale);
    s.read("compactness_c0", c.superpixel.compactness_c0);
    s.read("smoothing_sigma", c.superpixel.smoothing_sigma);
    s.read("iterations", c.superpixel.iterations);
    s.read("dice_threshold_per_scale", c.superpixel.dice_threshold_per_scale);
    s.read("intensity_percentile", c.superpixel.intensity_percentile);
    s.read("min_breast_fraction", c.superpixel.min_breast_fraction);
  }
  if (root.has("features")) {
    const Section s(root.at("features"), "features");
    s.allow({"glcm_levels", "glcm_distance"});
    s.read("glcm_levels", c.features.glcm_levels);
    s.read("glcm_distance", c.features.glcm_distance);
  }
  if (root.has("cascade")) {
    const Section s(root.at("cascade"), "cascade");
    s.allow({"kernel", "C", "gamma", "tolerance", "max_passes", "seed"});
    if (s.has("kernel")) {
      std::string k;
      s.read("kernel", k);
      if (k == "linear") {
        c.cascade.svm.kernel = KernelType::linear;
      } else if (k == "rbf") {
        c.cascade.svm.kernel = KernelType::rbf;
      } else {
        throw InvalidArgument("config: 'cascade.kernel' must be \"linear\" or \"rbf\"");
      }
    }
    s.read("C", c.cascade.svm.C);
    if (s.has("gamma")) {
      const json& g = s.at("gamma");
      if (g.is_string() && g.get<std::string>() == "scale") {
        c.cascade.svm.gamma.reset();
      } else if (g.is_number()) {
        c.cascade.svm.gamma = g.get<double>();
      } else {
        throw InvalidArgument("config: 'cascade.gamma' must be a number or \"scale\"");
      }
    }
    s.read("tolerance", c.cascade.svm.tolerance);
    s.read("max_passes", c.cascade.svm.max_passes);
    s.read("seed", c.cascade.seed);
  }
  if (root.has("eval")) {
    const Section s(root.at("eval"), "eval");
    s.allow({"k", "val_fraction", "dice_min", "merge_iou", "heatmap_combine"});
    s.read("k", c.eval.k);
    s.read("val_fraction", c.eval.val_fraction);
    s.read("dice_min", c.eval.dice_min);
    s.read("merge_iou", c.eval.merge_iou);
    if (s.has("heatmap_combine")) {
      std::string m;
      s.read("heatmap_combine", m);
      if (m == "mean") {
        c.eval.heatmap_combine = HeatmapCombine::mean;
      } else if (m == "max") {
        c.eval.heatmap_combine = HeatmapCombine::max;
      } else {
        throw InvalidArgument("config: 'eval.heatmap_combine' must be \"mean\" or \"max\"");
      }
    }
  }
  if (root.has("synth")) {
    const Section s(root.at("synth"), "synth");
    s.allow({"n_cases", "width", "height", "max_masses", "diameter_range_px"});
    s.read("n_cases", c.synth.n_cases);
    s.read("width", c.synth.width);
    s.read("height", c.synth.height);
    s.read("max_masses", c.synth.max_masses);
    if (s.has("diameter_range_px")) {
      std::vector<double> r;
      s.read("diameter_range_px", r);
      if (r.size() != 2) throw InvalidArgument("config: 'synth.diameter_range_px' must be [lo, hi]");
      c.synth.diameter_range_px = {r[0], r[1]};
    }
  }
  if (root.has("paths")) {
    const Section s(root.at("paths"), "paths");
    s.allow({"data", "out"});
    s.read("data", c.data_dir);
    s.read("out", c.out_dir);
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InvalidArgument("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string canonical_config_text(const PipelineConfig& cfg) {
  json j = to_json(cfg);
  j.erase("paths");  // where the data lives does not change the model
  return j.dump();
}

}  // namespace masscade
