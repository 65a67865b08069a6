#include "masscade/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "masscade/error.hpp"

namespace masscade {

namespace {

constexpr double kTau = 1e-12;
constexpr std::size_t kFullMatrixLimit = 6000;

// Q_ij = y_i y_j K_ij, either fully precomputed or computed row by row.
class QMatrix {
 public:
  QMatrix(const Matrix& X, const std::vector<int>& y, KernelType kernel, double gamma)
      : X_(X), y_(y), kernel_(kernel), gamma_(gamma), n_(X.size()), diag_(n_) {
    for (std::size_t i = 0; i < n_; ++i) diag_[i] = k(i, i);
    if (n_ <= kFullMatrixLimit) {
      full_.resize(n_ * n_);
      for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
          const double q = y_[i] * y_[j] * k(i, j);
          full_[i * n_ + j] = q;
          full_[j * n_ + i] = q;
        }
      }
    }
  }

  const double* row(std::size_t i, std::vector<double>& scratch) const {
    if (!full_.empty()) return full_.data() + i * n_;
    scratch.resize(n_);
    for (std::size_t j = 0; j < n_; ++j) scratch[j] = y_[i] * y_[j] * k(i, j);
    return scratch.data();
  }
  double diag(std::size_t i) const { return diag_[i]; }

 private:
  double k(std::size_t i, std::size_t j) const {
    return kernel_value(kernel_, gamma_, X_[i].data(), X_[j].data(), X_[i].size());
  }

  const Matrix& X_;
  const std::vector<int>& y_;
  KernelType kernel_;
  double gamma_;
  std::size_t n_;
  std::vector<double> diag_;
  std::vector<double> full_;
};

}  // namespace

void SvmParams::validate() const {
  if (!(C > 0.0)) throw InvalidArgument("svm: C must be > 0");
  if (!(tolerance > 0.0)) throw InvalidArgument("svm: tolerance must be > 0");
  if (gamma && !(*gamma > 0.0)) throw InvalidArgument("svm: gamma must be > 0 or \"scale\"");
  if (max_passes < 1) throw InvalidArgument("svm: max_passes must be >= 1");
}

double kernel_value(KernelType kernel, double gamma, const double* a, const double* b,
                    std::size_t n) {
  if (kernel == KernelType::linear) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
  }
  double d2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

SvmModel train_svm(const Matrix& X, const std::vector<int>& y, const SvmParams& params) {
  params.validate();
  if (X.size() != y.size()) throw InvalidArgument("train_svm: X and y lengths differ");
  if (X.empty()) throw InvalidArgument("train_svm: empty training set");
  const std::size_t n = X.size(), d = X[0].size();
  if (d == 0) throw InvalidArgument("train_svm: zero features");
  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (X[i].size() != d) throw InvalidArgument("train_svm: ragged feature matrix");
    if (y[i] == 1) {
      has_pos = true;
    } else if (y[i] == -1) {
      has_neg = true;
    } else {
      throw InvalidArgument("train_svm: labels must be +1 or -1");
    }
    for (double v : X[i]) {
      if (!std::isfinite(v)) throw InvalidArgument("train_svm: non-finite feature value");
    }
  }
  if (!has_pos || !has_neg) throw InvalidArgument("train_svm: training set has a single class");

  SvmModel m;
  m.kernel = params.kernel;
  m.C = params.C;
  m.mean.assign(d, 0.0);
  m.scale.assign(d, 0.0);
  for (const auto& row : X) {
    for (std::size_t f = 0; f < d; ++f) m.mean[f] += row[f];
  }
  for (auto& v : m.mean) v /= static_cast<double>(n);
  for (const auto& row : X) {
    for (std::size_t f = 0; f < d; ++f) m.scale[f] += (row[f] - m.mean[f]) * (row[f] - m.mean[f]);
  }
  for (auto& v : m.scale) {
    v = std::sqrt(v / static_cast<double>(n));
    if (!(v > 0.0)) v = 1.0;
  }
  Matrix Z(n, std::vector<double>(d));
  double zsum = 0.0, zsq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < d; ++f) {
      Z[i][f] = (X[i][f] - m.mean[f]) / m.scale[f];
      zsum += Z[i][f];
      zsq += Z[i][f] * Z[i][f];
    }
  }
  if (params.gamma) {
    m.gamma = *params.gamma;
  } else {
    const double cnt = static_cast<double>(n * d);
    const double var = zsq / cnt - (zsum / cnt) * (zsum / cnt);
    m.gamma = var > 0.0 ? 1.0 / (static_cast<double>(d) * var) : 1.0 / static_cast<double>(d);
  }

  const QMatrix Q(Z, y, m.kernel, m.gamma);
  const double C = params.C, eps = params.tolerance;
  std::vector<double> alpha(n, 0.0), G(n, -1.0);
  std::vector<double> scratch_i, scratch_j;
  auto upper = [&](std::size_t t) { return alpha[t] >= C; };
  auto lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

  const long long cap = std::max<long long>(1000, static_cast<long long>(params.max_passes) *
                                                      static_cast<long long>(n));
  long long iter = 0;
  for (; iter < cap; ++iter) {
    // Working set: i maximizes the first-order violation, j the second-order gain.
    double gmax = -std::numeric_limits<double>::infinity();
    double gmax2 = -std::numeric_limits<double>::infinity();
    std::ptrdiff_t ii = -1, jj = -1;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1) {
        if (!upper(t) && -G[t] >= gmax) {
          gmax = -G[t];
          ii = static_cast<std::ptrdiff_t>(t);
        }
      } else if (!lower(t) && G[t] >= gmax) {
        gmax = G[t];
        ii = static_cast<std::ptrdiff_t>(t);
      }
    }
    if (ii < 0) break;
    const std::size_t i = static_cast<std::size_t>(ii);
    const double* Qi = Q.row(i, scratch_i);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      double grad_diff, quad;
      if (y[t] == 1) {
        if (lower(t)) continue;
        grad_diff = gmax + G[t];
        gmax2 = std::max(gmax2, G[t]);
        quad = Q.diag(i) + Q.diag(t) - 2.0 * y[i] * Qi[t];
      } else {
        if (upper(t)) continue;
        grad_diff = gmax - G[t];
        gmax2 = std::max(gmax2, -G[t]);
        quad = Q.diag(i) + Q.diag(t) + 2.0 * y[i] * Qi[t];
      }
      if (grad_diff > 0.0) {
        const double obj = -(grad_diff * grad_diff) / (quad > 0.0 ? quad : kTau);
        if (obj <= best) {
          best = obj;
          jj = static_cast<std::ptrdiff_t>(t);
        }
      }
    }
    if (gmax + gmax2 < eps || jj < 0) break;
    const std::size_t j = static_cast<std::size_t>(jj);
    const double* Qj = Q.row(j, scratch_j);

    const double ai_old = alpha[i], aj_old = alpha[j];
    if (y[i] != y[j]) {
      double quad = Q.diag(i) + Q.diag(j) + 2.0 * Qi[j];
      if (quad <= 0.0) quad = kTau;
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = C - diff;
        }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      double quad = Q.diag(i) + Q.diag(j) - 2.0 * Qi[j];
      if (quad <= 0.0) quad = kTau;
      const double delta = (G[i] - G[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = sum - C;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) {
          alpha[j] = C;
          alpha[i] = sum - C;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }
    const double dai = alpha[i] - ai_old, daj = alpha[j] - aj_old;
    for (std::size_t t = 0; t < n; ++t) G[t] += Qi[t] * dai + Qj[t] * daj;
  }
  m.iterations = static_cast<int>(std::min<long long>(iter, std::numeric_limits<int>::max()));

  // Bias: average over free vectors, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
  int n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * G[t];
    if (upper(t)) {
      if (y[t] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (lower(t)) {
      if (y[t] == 1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free > 0 ? sum_free / n_free : (ub + lb) / 2.0;
  m.bias = -rho;

  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] > 0.0) {
      m.support_vectors.push_back(Z[t]);
      m.coef.push_back(alpha[t] * y[t]);
    }
  }
  return m;
}

double svm_decision(const SvmModel& model, const std::vector<double>& x) {
  const std::size_t d = model.n_features();
  if (x.size() != d) {
    throw InvalidArgument("svm_decision: expected " + std::to_string(d) + " features, got " +
                          std::to_string(x.size()));
  }
  std::vector<double> z(d);
  for (std::size_t f = 0; f < d; ++f) z[f] = (x[f] - model.mean[f]) / model.scale[f];
  double s = model.bias;
  for (std::size_t k = 0; k < model.coef.size(); ++k) {
    s += model.coef[k] *
         kernel_value(model.kernel, model.gamma, model.support_vectors[k].data(), z.data(), d);
  }
  return s;
}

double svm_dual_objective(const SvmModel& model) {
  double lin = 0.0, quad = 0.0;
  const std::size_t d = model.n_features();
  for (std::size_t a = 0; a < model.coef.size(); ++a) {
    lin += std::abs(model.coef[a]);
    for (std::size_t b = 0; b < model.coef.size(); ++b) {
      quad += model.coef[a] * model.coef[b] *
              kernel_value(model.kernel, model.gamma, model.support_vectors[a].data(),
                           model.support_vectors[b].data(), d);
    }
  }
  return lin - 0.5 * quad;
}

PlattParams fit_platt(const std::vector<double>& f, const std::vector<int>& y) {
  if (f.size() != y.size()) throw InvalidArgument("fit_platt: length mismatch");
  if (f.empty()) throw InvalidArgument("fit_platt: no calibration samples");
  double prior1 = 0, prior0 = 0;
  for (int v : y) (v > 0 ? prior1 : prior0) += 1.0;
  const double hi = (prior1 + 1.0) / (prior1 + 2.0), lo = 1.0 / (prior0 + 2.0);
  const std::size_t n = f.size();
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = y[i] > 0 ? hi : lo;

  auto objective = [&](double A, double B) {
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double fab = f[i] * A + B;
      v += fab >= 0.0 ? t[i] * fab + std::log1p(std::exp(-fab))
                      : (t[i] - 1.0) * fab + std::log1p(std::exp(fab));
    }
    return v;
  };

  PlattParams p{0.0, std::log((prior0 + 1.0) / (prior1 + 1.0))};
  double fval = objective(p.A, p.B);
  constexpr double kSigma = 1e-12, kMinStep = 1e-10, kEps = 1e-5;
  for (int it = 0; it < 100; ++it) {
    double h11 = kSigma, h22 = kSigma, h21 = 0, g1 = 0, g2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double fab = f[i] * p.A + p.B;
      double pr, q;
      if (fab >= 0.0) {
        const double e = std::exp(-fab);
        pr = e / (1.0 + e);
        q = 1.0 / (1.0 + e);
      } else {
        const double e = std::exp(fab);
        pr = 1.0 / (1.0 + e);
        q = e / (1.0 + e);
      }
      const double d2 = pr * q;
      h11 += f[i] * f[i] * d2;
      h22 += d2;
      h21 += f[i] * d2;
      const double d1 = t[i] - pr;
      g1 += f[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < kEps && std::abs(g2) < kEps) break;
    const double det = h11 * h22 - h21 * h21;
    const double dA = -(h22 * g1 - h21 * g2) / det;
    const double dB = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * dA + g2 * dB;
    double step = 1.0;
    while (step >= kMinStep) {
      const double nA = p.A + step * dA, nB = p.B + step * dB;
      const double nf = objective(nA, nB);
      if (nf < fval + 1e-4 * step * gd) {
        p = {nA, nB};
        fval = nf;
        break;
      }
      step /= 2.0;
    }
    if (step < kMinStep) break;
  }
  return p;
}

double platt_probability(const PlattParams& p, double f) {
  const double fab = p.A * f + p.B;
  if (fab >= 0.0) {
    const double e = std::exp(-fab);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(fab));
}

nlohmann::json to_json(const SvmModel& m) {
  return {{"kernel", m.kernel == KernelType::linear ? "linear" : "rbf"},
          {"gamma", m.gamma},
          {"C", m.C},
          {"mean", m.mean},
          {"scale", m.scale},
          {"support_vectors", m.support_vectors},
          {"coef", m.coef},
          {"bias", m.bias},
          {"iterations", m.iterations}};
}

SvmModel svm_model_from_json(const nlohmann::json& j) {
  SvmModel m;
  const std::string k = j.at("kernel").get<std::string>();
  if (k == "linear") {
    m.kernel = KernelType::linear;
  } else if (k == "rbf") {
    m.kernel = KernelType::rbf;
  } else {
    throw DataError("unknown kernel '" + k + "' in model");
  }
  j.at("gamma").get_to(m.gamma);
  j.at("C").get_to(m.C);
  j.at("mean").get_to(m.mean);
  j.at("scale").get_to(m.scale);
  j.at("support_vectors").get_to(m.support_vectors);
  j.at("coef").get_to(m.coef);
  j.at("bias").get_to(m.bias);
  j.at("iterations").get_to(m.iterations);
  if (m.scale.size() != m.mean.size() || m.coef.size() != m.support_vectors.size()) {
    throw DataError("inconsistent SVM model arrays");
  }
  return m;
}

}  // namespace masscade
