#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "icr/gaussian.hpp"
#include "test_support.hpp"

using namespace icr;
using namespace icr::testing;

namespace {

using Order = std::vector<std::size_t>;

UpdatingCycle cycle_of(const ConditionalModel& m, Order order) {
  auto c = is_permissible(m, order);
  REQUIRE(c.permissible);
  return c;
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an icr::Error");
  return ErrorCode::InvalidArgument;
}

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

GaussianDistribution zero_mean(VarSet scope, Eigen::MatrixXd cov) {
  const auto n = cov.rows();
  return GaussianDistribution(std::move(scope), Eigen::VectorXd::Zero(n), std::move(cov));
}

Eigen::MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> z;
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = z(rng);
  return a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

}  // namespace

TEST_CASE("moment-form replacement") {
  SUBCASE("full conditional of X3 on a standard pair") {
    const auto f = example1().gaussian()[2];
    const auto h = GaussianDistribution::standard(VarSet{0, 1});
    const auto q = gaussian_replacement(h, f);
    REQUIRE(q.scope() == VarSet{0, 1, 2});
    const auto& s = q.covariance();
    CHECK(s(2, 2) == doctest::Approx(11.0 / 2.0).epsilon(1e-15));
    CHECK(s(2, 0) == doctest::Approx(-1.5).epsilon(1e-15));
    CHECK(s(1, 2) == doctest::Approx(-1.5).epsilon(1e-15));
    CHECK(s(0, 0) == 1.0);
    CHECK(s(1, 1) == 1.0);
    CHECK(s(0, 1) == 0.0);
  }
  SUBCASE("own conditional is the identity") {
    std::mt19937_64 rng(51);
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::MatrixXd s = random_spd(rng, 3);
      Eigen::VectorXd mu(3);
      mu << 0.5, -1.0, 2.0;
      const GaussianDistribution h(VarSet{0, 1, 2}, mu, s);
      // X2 | X1, X3 extracted by Schur complement.
      const std::vector<int> b{0, 2};
      Eigen::MatrixXd sbb(2, 2), sab(1, 2);
      for (int i = 0; i < 2; ++i) {
        sab(0, i) = s(1, b[i]);
        for (int j = 0; j < 2; ++j) sbb(i, j) = s(b[i], b[j]);
      }
      const Eigen::MatrixXd coef = sab * sbb.inverse();
      Eigen::VectorXd mub(2);
      mub << mu(0), mu(2);
      const Eigen::VectorXd intercept = Eigen::VectorXd::Constant(1, mu(1)) - coef * mub;
      const Eigen::MatrixXd cond = Eigen::MatrixXd::Constant(1, 1, s(1, 1)) - coef * sab.transpose();
      const GaussianConditional f(VarSet{1}, VarSet{0, 2}, coef, intercept, cond);
      const auto q = gaussian_replacement(h, f);
      CHECK(max_abs(q.covariance() - s) < 1e-12);
      CHECK((q.mean() - mu).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("empty parent set") {
    const GaussianConditional f(VarSet{1}, VarSet{}, Eigen::MatrixXd(1, 0),
                                Eigen::VectorXd::Constant(1, 2.0),
                                Eigen::MatrixXd::Constant(1, 1, 3.0));
    const auto q = gaussian_replacement(GaussianDistribution::standard(VarSet{0, 1}), f);
    CHECK(q.scope() == VarSet{1});
    CHECK(q.mean()(0) == 2.0);
    CHECK(q.covariance()(0, 0) == 3.0);
  }
  SUBCASE("intercepts shift the mean") {
    const GaussianConditional f(VarSet{1}, VarSet{0}, Eigen::MatrixXd::Constant(1, 1, 2.0),
                                Eigen::VectorXd::Constant(1, 1.0),
                                Eigen::MatrixXd::Constant(1, 1, 1.0));
    const GaussianDistribution h(VarSet{0}, Eigen::VectorXd::Constant(1, 3.0),
                                 Eigen::MatrixXd::Constant(1, 1, 4.0));
    const auto q = gaussian_replacement(h, f);
    CHECK(q.mean()(1) == doctest::Approx(7.0));
    CHECK(q.covariance()(1, 1) == doctest::Approx(17.0));
    CHECK(q.covariance()(0, 1) == doctest::Approx(8.0));
  }
  SUBCASE("parents outside the scope") {
    const auto f = example2().gaussian()[1];  // X2 | X3
    CHECK(code_of([&] { gaussian_replacement(GaussianDistribution::standard(VarSet{0, 1}), f); }) ==
          ErrorCode::NotPermissibleStep);
  }
  SUBCASE("agrees with Monte Carlo draws") {
    const auto f = example1().gaussian()[2];
    std::mt19937_64 rng(52);
    std::normal_distribution<double> z;
    const int n = 1000000;
    double s22 = 0, s20 = 0;
    for (int k = 0; k < n; ++k) {
      const double x1 = z(rng), x2 = z(rng);
      const double x3 = -1.5 * x1 - 1.5 * x2 + z(rng);
      s22 += x3 * x3;
      s20 += x3 * x1;
    }
    // Standard errors: Var(X3^2) = 2 * 5.5^2, Var(X3 X1) = 5.5 + 1.5^2.
    CHECK(std::abs(s22 / n - 5.5) < 3.0 * std::sqrt(2 * 5.5 * 5.5 / n));
    CHECK(std::abs(s20 / n + 1.5) < 3.0 * std::sqrt((5.5 + 2.25) / n));
  }
}

TEST_CASE("three full conditionals, converging cycle") {
  const auto model = example1();
  const auto report = gaussian_icr_run(model, cycle_of(model, {1, 0, 2}));
  REQUIRE(report.converged());
  REQUIRE(report.stationary.size() == 3);
  CHECK(max_abs(report.stationary[0].covariance() - example1_after_x2()) < 1e-6);
  CHECK(max_abs(report.stationary[1].covariance() - example1_after_x1()) < 1e-6);
  CHECK(max_abs(report.stationary[2].covariance() - example1_after_x3()) < 1e-6);
  for (const auto& s : report.stationary) CHECK(s.mean().norm() < 1e-9);

  SUBCASE("per-position gaps fall monotonically") {
    for (const auto& trace : report.traces) {
      for (std::size_t k = 1; k < trace.size(); ++k) {
        if (trace[k - 1] < 1e-18) break;
        CHECK(trace[k] < trace[k - 1]);
      }
    }
  }
  SUBCASE("limits do not depend on the start") {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::VectorXd mu(3);
      mu << trial, -trial, 0.5;
      const GaussianDistribution q0(VarSet{0, 1, 2}, mu, random_spd(rng, 3));
      const auto r = gaussian_icr_run(model, cycle_of(model, {1, 0, 2}), q0);
      REQUIRE(r.converged());
      for (std::size_t i = 0; i < 3; ++i) {
        CHECK(max_parameter_difference(r.stationary[i], report.stationary[i]) < 1e-8);
      }
    }
  }
  SUBCASE("the three limits are mutually stationary but distinct") {
    const auto cycle = cycle_of(model, {1, 0, 2});
    CHECK(gaussian_mutual_stationarity_check(report.stationary, model, cycle).ok);
    CHECK(max_parameter_difference(report.stationary[0], report.stationary[2]) > 1.0);
    for (std::size_t p = 0; p < 3; ++p) {
      const auto round = gaussian_propagate_round(model, cycle, p, report.stationary[p]);
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(max_parameter_difference(round[j], report.stationary[j]) < 1e-8);
      }
    }
    auto broken = report.stationary;
    Eigen::MatrixXd cov = broken[1].covariance();
    cov(0, 0) += 1e-3;
    broken[1] = GaussianDistribution(broken[1].scope(), broken[1].mean(), cov);
    CHECK_FALSE(gaussian_mutual_stationarity_check(broken, model, cycle).ok);
  }
  SUBCASE("compatibility verdict") {
    const auto r = gaussian_compatibility_check(model, cycle_of(model, {1, 0, 2}));
    CHECK(r.verdict == Compatibility::Incompatible);
    CHECK(r.report.compatible == std::optional<bool>(false));
  }
}

TEST_CASE("three full conditionals, diverging cycle") {
  const auto model = example1();
  const auto report = gaussian_icr_run(model, cycle_of(model, {0, 1, 2}));
  CHECK_FALSE(report.converged());
  CHECK(report.status == GaussianIcrStatus::Blowup);
  CHECK(report.stationary.empty());

  GaussianIcrConfig tight;
  tight.max_cycles = 20;
  const auto capped = gaussian_icr_run(model, cycle_of(model, {0, 1, 2}), tight);
  CHECK(capped.status == GaussianIcrStatus::MaxCycles);
  CHECK(capped.cycles_used == 20);

  const auto verdict = gaussian_compatibility_check(model, cycle_of(model, {0, 1, 2}));
  CHECK(verdict.verdict == Compatibility::Undecidable);
}

TEST_CASE("bivariate conditionals on a three-cycle") {
  const auto model = example2();
  const auto cycle = cycle_of(model, {0, 2, 1});
  const auto report = gaussian_icr_run(model, cycle);
  REQUIRE(report.converged());
  REQUIRE(report.stationary.size() == 3);
  CHECK(report.stationary[0].scope() == VarSet{0, 1});
  CHECK(report.stationary[1].scope() == VarSet{0, 2});
  CHECK(report.stationary[2].scope() == VarSet{1, 2});
  CHECK(max_abs(report.stationary[0].covariance() - mat2(4, 2, 2, 10)) < 1e-6);
  CHECK(max_abs(report.stationary[1].covariance() - mat2(4, -3, -3, 16)) < 1e-6);
  CHECK(max_abs(report.stationary[2].covariance() - mat2(10, -5, -5, 16)) < 1e-6);
  CHECK(gaussian_mutual_stationarity_check(report.stationary, model, cycle).ok);

  const auto joint =
      assemble_trivariate(report.stationary[0], report.stationary[2], report.stationary[1]);
  Eigen::MatrixXd want(3, 3);
  want << 4, 2, -3, 2, 10, -5, -3, -5, 16;
  CHECK(max_abs(joint.covariance() - want) < 1e-6);

  CHECK(code_of([&] { gaussian_compatibility_check(model, cycle); }) == ErrorCode::NotAllFull);
}

TEST_CASE("trivariate assembly") {
  Eigen::MatrixXd s(3, 3);
  s << 4, 2, -3, 2, 10, -5, -3, -5, 16;
  const auto full = zero_mean(VarSet{0, 1, 2}, s);
  const auto m12 = gaussian_marginal(full, VarSet{0, 1});
  const auto m23 = gaussian_marginal(full, VarSet{1, 2});
  const auto m13 = gaussian_marginal(full, VarSet{0, 2});
  CHECK(assemble_trivariate(m12, m23, m13).covariance() == s);
  CHECK(assemble_trivariate(m13, m12, m23).covariance() == s);

  const auto other = zero_mean(VarSet{1, 2}, mat2(9, -5, -5, 16));
  CHECK(code_of([&] { assemble_trivariate(m12, other, m13); }) == ErrorCode::InconsistentMargins);

  const auto skewed = zero_mean(VarSet{0, 2}, mat2(4, 7.9, 7.9, 16));
  CHECK(code_of([&] { assemble_trivariate(m12, m23, skewed); }) ==
        ErrorCode::NotPositiveDefinite);
  CHECK(code_of([&] { assemble_trivariate(m12, m12, m13); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("rational display") {
  CHECK(rational_approximation(241.0 / 50.0) == std::optional<std::string>("241/50"));
  CHECK(rational_approximation(-103.0 / 50.0) == std::optional<std::string>("-103/50"));
  CHECK_FALSE(rational_approximation(std::sqrt(2.0)).has_value());
}

TEST_CASE("settings and trace export") {
  GaussianIcrConfig bad;
  bad.frob_tol = -1.0;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidArgument);

  const auto model = example2();
  const auto report = gaussian_icr_run(model, cycle_of(model, {0, 2, 1}));
  std::ostringstream out;
  write_trace_csv(report, out);
  CHECK(out.str().rfind("cycle_index,position,kl_gap,frob_gap\n", 0) == 0);
  CHECK(to_string(GaussianIcrStatus::Blowup) == "blowup");
}
