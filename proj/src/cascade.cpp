#include "masscade/cascade.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "masscade/error.hpp"
#include "masscade/random.hpp"

namespace masscade {

namespace {

constexpr const char* kModelFormat = "masscade-cascade-v1";

Matrix rows(const Matrix& M, const std::vector<std::size_t>& idx) {
  Matrix out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(M[i]);
  return out;
}

SvmModel train_pair(const Matrix& T, const Matrix& F, const SvmParams& params) {
  Matrix X = T;
  X.insert(X.end(), F.begin(), F.end());
  std::vector<int> y(T.size(), 1);
  y.resize(T.size() + F.size(), -1);
  return train_svm(X, y, params);
}

// Indices (into `idx`'s source) whose sample passes the stage.
std::vector<std::size_t> survivors(const StageModel& stage, const Matrix& M,
                                   const std::vector<std::size_t>& idx) {
  const StageOutput out = stage_predict(stage, rows(M, idx));
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (out.pass[k]) keep.push_back(idx[k]);
  }
  return keep;
}

nlohmann::json stage_json(const std::optional<StageModel>& s) {
  if (!s) return nullptr;
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : s->members) members.push_back(to_json(m));
  return {{"members", members}};
}

std::optional<StageModel> stage_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  StageModel s;
  for (const auto& m : j.at("members")) s.members.push_back(svm_model_from_json(m));
  if (s.members.empty()) throw DataError("cascade stage without members");
  return s;
}

}  // namespace

int compute_n(std::size_t n_negatives, std::size_t n_positives) {
  if (n_positives == 0) throw InvalidArgument("compute_n: zero positives");
  if (n_negatives == 0) throw InvalidArgument("compute_n: zero negatives");
  const double ratio = static_cast<double>(n_negatives) / static_cast<double>(n_positives);
  return std::max(1, static_cast<int>(std::lround(ratio / 10.0)));
}

std::vector<std::vector<std::size_t>> partition_indices(std::size_t n, int parts,
                                                        std::uint64_t seed) {
  if (parts < 1) throw InvalidArgument("partition_indices: parts must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const std::size_t p = static_cast<std::size_t>(parts), base = n / p, extra = n % p;
  std::vector<std::vector<std::size_t>> out(p);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < p; ++k) {
    const std::size_t len = base + (k < extra ? 1 : 0);
    out[k].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                  order.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return out;
}

StageModel train_stage(const Matrix& T, const Matrix& F, const SvmParams& params,
                       std::uint64_t seed) {
  if (T.empty() || F.empty()) throw InvalidArgument("train_stage: both classes must be non-empty");
  const int n = compute_n(F.size(), T.size());
  StageModel stage;
  for (const auto& part : partition_indices(F.size(), n, seed)) {
    stage.members.push_back(train_pair(T, rows(F, part), params));
  }
  return stage;
}

StageOutput stage_predict(const StageModel& stage, const Matrix& X) {
  if (stage.members.empty()) throw InvalidArgument("stage_predict: stage has no members");
  StageOutput out;
  out.mean_decision.reserve(X.size());
  out.pass.reserve(X.size());
  for (const auto& x : X) {
    double s = 0.0;
    for (const auto& m : stage.members) s += svm_decision(m, x);
    const double mean = s / static_cast<double>(stage.members.size());
    out.mean_decision.push_back(mean);
    out.pass.push_back(mean > 0.0 ? 1 : 0);
  }
  return out;
}

CascadeModel train_cascade(const Matrix& T, const Matrix& F, const SvmParams& params,
                           std::uint64_t seed, const Matrix& X_val, const std::vector<int>& y_val,
                           CascadeTrace* trace) {
  if (T.empty() || F.empty()) {
    throw InvalidArgument("train_cascade: both classes must be non-empty");
  }
  if (X_val.empty() || X_val.size() != y_val.size()) {
    throw InvalidArgument("train_cascade: validation set is empty or inconsistent");
  }
  CascadeTrace local;
  CascadeTrace& tr = trace ? *trace : local;
  tr = CascadeTrace{};

  std::vector<std::size_t> t1(T.size()), f1(F.size());
  std::iota(t1.begin(), t1.end(), 0);
  std::iota(f1.begin(), f1.end(), 0);
  tr.positives[0] = t1;
  tr.negatives[0] = f1;

  CascadeModel model;
  model.stage1 = train_stage(T, F, params, derive_seed(seed, 1));
  std::vector<std::size_t> t2 = survivors(*model.stage1, T, t1);
  std::vector<std::size_t> f2 = survivors(*model.stage1, F, f1);
  if (t2.empty()) throw PipelineError("cascade starved of positives (after stage 1)");

  std::vector<std::size_t> t3, f3;
  if (f2.empty()) {
    // Stage 1 rejected every negative: skip stage 2, keep the stage-1 negatives.
    tr.stage2_skipped = true;
    tr.positives[1] = t2;
    t3 = t2;
    f3 = f1;
  } else {
    tr.positives[1] = t2;
    tr.negatives[1] = f2;
    model.stage2 = train_stage(rows(T, t2), rows(F, f2), params, derive_seed(seed, 2));
    t3 = survivors(*model.stage2, T, t2);
    f3 = survivors(*model.stage2, F, f2);
    if (t3.empty()) throw PipelineError("cascade starved of positives (after stage 2)");
    if (f3.empty()) f3 = f2;
  }
  tr.positives[2] = t3;
  tr.negatives[2] = f3;

  model.final_svm = train_pair(rows(T, t3), rows(F, f3), params);
  std::vector<double> dv;
  dv.reserve(X_val.size());
  for (const auto& x : X_val) dv.push_back(svm_decision(model.final_svm, x));
  model.platt = fit_platt(dv, y_val);
  return model;
}

Prediction cascade_score(const CascadeModel& model, const std::vector<double>& x) {
  Prediction p;
  if (model.stage1 && !stage_predict(*model.stage1, {x}).pass[0]) return p;
  p.survived_stage = 1;
  if (model.stage2 && !stage_predict(*model.stage2, {x}).pass[0]) return p;
  p.survived_stage = 3;
  p.final_decision = svm_decision(model.final_svm, x);
  p.probability = platt_probability(model.platt, p.final_decision);
  return p;
}

Prediction cascade_score(const CascadeModel& model, const FeatureVector& x) {
  if (x.version != model.feature_version) {
    throw InvalidArgument("feature version '" + x.version + "' does not match model version '" +
                          model.feature_version + "'");
  }
  return cascade_score(model, x.values);
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json to_json(const CascadeModel& m) {
  return {{"format", kModelFormat},
          {"feature_version", m.feature_version},
          {"feature_names", m.feature_names},
          {"config_hash", m.config_hash},
          {"stage1", stage_json(m.stage1)},
          {"stage2", stage_json(m.stage2)},
          {"final", to_json(m.final_svm)},
          {"platt", {{"A", m.platt.A}, {"B", m.platt.B}}}};
}

CascadeModel cascade_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat) {
      throw DataError("unsupported model format " + j.at("format").dump());
    }
    CascadeModel m;
    j.at("feature_version").get_to(m.feature_version);
    j.at("feature_names").get_to(m.feature_names);
    j.at("config_hash").get_to(m.config_hash);
    m.stage1 = stage_from_json(j.at("stage1"));
    m.stage2 = stage_from_json(j.at("stage2"));
    m.final_svm = svm_model_from_json(j.at("final"));
    j.at("platt").at("A").get_to(m.platt.A);
    j.at("platt").at("B").get_to(m.platt.B);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed cascade model: ") + e.what());
  }
}

void save_cascade(const std::filesystem::path& path, const CascadeModel& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json(m).dump(1) << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

CascadeModel load_cascade(const std::filesystem::path& path, const std::string& expected_version) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse " + path.string() + ": " + e.what());
  }
  CascadeModel m = cascade_from_json(j);
  if (m.feature_version != expected_version) {
    throw DataError("model " + path.string() + " uses feature version '" + m.feature_version +
                    "', expected '" + expected_version + "'");
  }
  return m;
}

}  // namespace masscade
