#include <doctest.h>

#include <cmath>
#include <numeric>

#include "masscade/error.hpp"
#include "masscade/random.hpp"
#include "masscade/svm.hpp"
#include "svm_fixtures.hpp"

using namespace masscade;

namespace {

std::vector<double> unstandardize(const SvmModel& m, const std::vector<double>& z) {
  std::vector<double> x(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) x[k] = z[k] * m.scale[k] + m.mean[k];
  return x;
}

}  // namespace

TEST_CASE("two points give the analytic max-margin solution") {
  SvmParams p;
  p.kernel = KernelType::linear;
  p.C = 1000;
  const auto m = train_svm({{-1.0}, {1.0}}, {-1, 1}, p);
  CHECK(svm_decision(m, {-1.0}) == doctest::Approx(-1.0).epsilon(1e-3));
  CHECK(svm_decision(m, {1.0}) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(std::abs(svm_decision(m, {0.0})) < 1e-3);
}

TEST_CASE("rbf separates XOR") {
  SvmParams p;
  p.gamma = 1.0;
  p.C = 10;
  const Matrix X{{0, 0}, {1, 1}, {0, 1}, {1, 0}};
  const std::vector<int> y{-1, -1, 1, 1};
  const auto m = train_svm(X, y, p);
  for (std::size_t i = 0; i < 4; ++i) CHECK(svm_decision(m, X[i]) * y[i] > 0);
  CHECK(svm_decision(m, X[0]) == svm_decision(m, X[0]));
}

TEST_CASE("duplicating every point is the same problem with twice the C") {
  Rng rng(10);
  for (int t = 0; t < 10; ++t) {
    auto prob = fixture::random_svm_problem(rng, t % 2 == 0);
    auto dup = prob;
    for (std::size_t i = 0; i < prob.X.size(); ++i) {
      dup.X.push_back(prob.X[i]);
      dup.y.push_back(prob.y[i]);
    }
    auto twice = prob;
    twice.params.C = 2 * prob.params.C;
    const auto a = train_svm(dup.X, dup.y, dup.params);
    const auto b = train_svm(twice.X, twice.y, twice.params);
    for (const auto& x : prob.X) CHECK(svm_decision(a, x) == doctest::Approx(svm_decision(b, x)).epsilon(1e-3).scale(1));
  }
  // Separable data with a large C: duplication leaves the decision unchanged.
  const Matrix X{{0, 0}, {0, 1}, {3, 0}, {3, 1}};
  const std::vector<int> y{-1, -1, 1, 1};
  SvmParams p;
  p.kernel = KernelType::linear;
  p.C = 1e4;
  p.tolerance = 1e-6;
  const auto single = train_svm(X, y, p);
  Matrix X2 = X;
  X2.insert(X2.end(), X.begin(), X.end());
  std::vector<int> y2 = y;
  y2.insert(y2.end(), y.begin(), y.end());
  const auto doubled = train_svm(X2, y2, p);
  for (const auto& x : X) CHECK(std::abs(svm_decision(single, x) - svm_decision(doubled, x)) < 1e-3);
}

TEST_CASE("mirrored data gives an odd linear decision") {
  Rng rng(3);
  Matrix X;
  std::vector<int> y;
  for (int i = 0; i < 8; ++i) {
    const std::vector<double> p{rng.normal() + 1.0, rng.normal() - 0.5};
    X.push_back(p);
    y.push_back(1);
  }
  for (int i = 0; i < 8; ++i) {
    X.push_back({-X[i][0], -X[i][1]});
    y.push_back(-1);
  }
  SvmParams p;
  p.kernel = KernelType::linear;
  p.tolerance = 1e-8;
  p.max_passes = 100000;
  const auto m = train_svm(X, y, p);
  for (int t = 0; t < 20; ++t) {
    const std::vector<double> x{rng.normal() * 2, rng.normal() * 2};
    CHECK(std::abs(svm_decision(m, x) + svm_decision(m, {-x[0], -x[1]})) < 1e-6);
  }
}

TEST_CASE("KKT conditions and the equality constraint") {
  Rng rng(55);
  for (int t = 0; t < 30; ++t) {
    const auto prob = fixture::random_svm_problem(rng, t % 2 == 1);
    const auto m = train_svm(prob.X, prob.y, prob.params);
    CHECK(std::abs(std::accumulate(m.coef.begin(), m.coef.end(), 0.0)) < 1e-6);
    for (std::size_t i = 0; i < m.coef.size(); ++i) {
      const double a = std::abs(m.coef[i]);
      CHECK(a <= m.C * (1 + 1e-12));
      if (a > 1e-6 * m.C && a < m.C * (1 - 1e-6)) {
        CHECK(std::abs(std::abs(svm_decision(m, unstandardize(m, m.support_vectors[i]))) - 1.0) <
              1e-3);
      }
    }
  }
}

TEST_CASE("SMO agrees with projected-gradient QP") {
  Rng rng(1234);
  for (int t = 0; t < 30; ++t) {
    const auto prob = fixture::random_svm_problem(rng, t % 2 == 0);
    const auto ref = fixture::solve_reference(prob);
    const auto m = train_svm(prob.X, prob.y, prob.params);
    CHECK(m.gamma == doctest::Approx(ref.gamma));
    CHECK(std::abs(svm_dual_objective(m) - ref.qp.objective) < 1e-3);
    for (std::size_t i = 0; i < prob.X.size(); ++i) {
      CHECK(std::abs(svm_decision(m, prob.X[i]) - fixture::ref_decision(prob, ref, ref.Z[i])) <
            1e-3);
    }
  }
}

TEST_CASE("invalid training input") {
  SvmParams p;
  CHECK_THROWS_AS(train_svm({{1.0}, {2.0}}, {1, 1}, p), InvalidArgument);
  CHECK_THROWS_AS(train_svm({{1.0}, {2.0, 3.0}}, {1, -1}, p), InvalidArgument);
  CHECK_THROWS_AS(train_svm({{1.0}, {NAN}}, {1, -1}, p), InvalidArgument);
  CHECK_THROWS_AS(train_svm({{1.0}, {2.0}}, {1, 0}, p), InvalidArgument);
  const auto m = train_svm({{1.0}, {2.0}}, {1, -1}, p);
  CHECK_THROWS_AS(svm_decision(m, {1.0, 2.0}), InvalidArgument);
  p.C = 0;
  CHECK_THROWS_AS(train_svm({{1.0}, {2.0}}, {1, -1}, p), InvalidArgument);
}

TEST_CASE("constant features pass through") {
  SvmParams p;
  p.kernel = KernelType::linear;
  const auto m = train_svm({{5.0, -1.0}, {5.0, 1.0}}, {-1, 1}, p);
  CHECK(m.scale[0] == 1.0);
  CHECK(m.mean[0] == 5.0);
  CHECK(svm_decision(m, {5.0, 1.0}) > 0);
}

TEST_CASE("model JSON round-trip") {
  Rng rng(9);
  const auto prob = fixture::random_svm_problem(rng, false);
  const auto m = train_svm(prob.X, prob.y, prob.params);
  const auto back = svm_model_from_json(nlohmann::json::parse(to_json(m).dump()));
  CHECK(back == m);
}

TEST_CASE("Platt scaling") {
  std::vector<double> f;
  std::vector<int> y;
  for (int i = -10; i <= 10; ++i) {
    f.push_back(i * 0.3);
    y.push_back(i > 0 ? 1 : -1);
  }
  y[9] = 1;
  y[12] = -1;
  const auto pp = fit_platt(f, y);
  CHECK(pp.A < 0);
  double prev = 0;
  for (double x = -50; x <= 50; x += 0.5) {
    const double p = platt_probability(pp, x);
    CHECK(p >= prev);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    prev = p;
  }
  CHECK(platt_probability(pp, 1e6) == doctest::Approx(1.0));
  CHECK(platt_probability(pp, -1e6) == doctest::Approx(0.0));
  CHECK(platt_probability({-1.0, 0.0}, 0.0) == 0.5);
}
