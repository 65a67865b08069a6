#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "masscade/features.hpp"
#include "masscade/svm.hpp"

namespace masscade {

struct StageModel {
  std::vector<SvmModel> members;

  [[nodiscard]] int n() const { return static_cast<int>(members.size()); }
  bool operator==(const StageModel&) const = default;
};

/// Two ensemble stages and a Platt-calibrated final SVM. A stage is absent when
/// no negatives were left to train it; an absent stage passes everything.
struct CascadeModel {
  std::string feature_version = kFeatureVersion;
  std::vector<std::string> feature_names;
  std::string config_hash;
  std::optional<StageModel> stage1;
  std::optional<StageModel> stage2;
  SvmModel final_svm;
  PlattParams platt;

  bool operator==(const CascadeModel&) const = default;
};

/// survived_stage: 0 rejected by stage 1, 1 rejected by stage 2, 3 scored by
/// the final SVM. Rejected samples get probability 0.
struct Prediction {
  int survived_stage = 0;
  double probability = 0.0;
  double final_decision = 0.0;  // only meaningful when survived_stage == 3
};

/// max(1, round((n_negatives / n_positives) / 10)).
int compute_n(std::size_t n_negatives, std::size_t n_positives);

/// Shuffles 0..n-1 with `seed` and cuts it into `parts` contiguous slices; the
/// first n % parts slices get one extra element.
std::vector<std::vector<std::size_t>> partition_indices(std::size_t n, int parts,
                                                        std::uint64_t seed);

StageModel train_stage(const Matrix& T, const Matrix& F, const SvmParams& params,
                       std::uint64_t seed);

struct StageOutput {
  std::vector<double> mean_decision;
  std::vector<std::uint8_t> pass;  // mean_decision > 0
};

StageOutput stage_predict(const StageModel& stage, const Matrix& X);

/// Row indices into T and F of the training inputs of stage 1, stage 2 and
/// the final SVM.
struct CascadeTrace {
  std::vector<std::size_t> positives[3];
  std::vector<std::size_t> negatives[3];
  bool stage2_skipped = false;
};

/// Throws PipelineError("cascade starved of positives") when no positive
/// survives a stage, InvalidArgument on empty classes or validation set.
CascadeModel train_cascade(const Matrix& T, const Matrix& F, const SvmParams& params,
                           std::uint64_t seed, const Matrix& X_val, const std::vector<int>& y_val,
                           CascadeTrace* trace = nullptr);

Prediction cascade_score(const CascadeModel& model, const std::vector<double>& x);
/// Checks the vector's version tag against the model's first.
Prediction cascade_score(const CascadeModel& model, const FeatureVector& x);

/// 64-bit FNV-1a of `text`, as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& text);

nlohmann::json to_json(const CascadeModel& m);
CascadeModel cascade_from_json(const nlohmann::json& j);
void save_cascade(const std::filesystem::path& path, const CascadeModel& m);
/// Throws DataError if the stored feature version differs from `expected_version`.
CascadeModel load_cascade(const std::filesystem::path& path,
                          const std::string& expected_version = kFeatureVersion);

}  // namespace masscade
