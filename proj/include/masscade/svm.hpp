#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

namespace masscade {

using Matrix = std::vector<std::vector<double>>;

enum class KernelType { linear, rbf };

struct SvmParams {
  KernelType kernel = KernelType::rbf;
  double C = 1.0;
  /// Empty means "scale": 1 / (n_features * variance of the standardized data).
  std::optional<double> gamma;
  double tolerance = 1e-3;
  /// The solver stops after max_passes * n pair updates at the latest.
  int max_passes = 200;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SvmParams&) const = default;
};

struct SvmModel {
  KernelType kernel = KernelType::rbf;
  double gamma = 1.0;
  double C = 1.0;
  std::vector<double> mean, scale;  // per-feature standardization
  Matrix support_vectors;           // standardized
  std::vector<double> coef;         // alpha_i * y_i
  double bias = 0.0;
  int iterations = 0;

  [[nodiscard]] std::size_t n_features() const { return mean.size(); }
  bool operator==(const SvmModel&) const = default;
};

/// Soft-margin C-SVM trained by SMO with second-order working-set selection.
/// Labels are +1 / -1. Throws InvalidArgument on a single class, ragged or
/// non-finite input.
SvmModel train_svm(const Matrix& X, const std::vector<int>& y, const SvmParams& params);

/// sum_i coef_i K(sv_i, standardize(x)) + bias.
double svm_decision(const SvmModel& model, const std::vector<double>& x);

/// Dual objective sum(alpha) - 1/2 sum_ij coef_i coef_j K_ij of the trained model.
double svm_dual_objective(const SvmModel& model);

double kernel_value(KernelType kernel, double gamma, const double* a, const double* b,
                    std::size_t n);

struct PlattParams {
  double A = 0.0;
  double B = 0.0;
  bool operator==(const PlattParams&) const = default;
};

/// Regularized maximum-likelihood sigmoid fit (Newton with backtracking).
PlattParams fit_platt(const std::vector<double>& decision, const std::vector<int>& y);

/// 1 / (1 + exp(A f + B)), evaluated without overflow.
double platt_probability(const PlattParams& p, double f);

nlohmann::json to_json(const SvmModel& m);
SvmModel svm_model_from_json(const nlohmann::json& j);

}  // namespace masscade
