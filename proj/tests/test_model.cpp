#include <cmath>
#include <random>

#include "doctest.h"
#include "test_support.hpp"

using namespace icr;
using namespace icr::testing;

namespace {

DiscreteDistribution binary(std::vector<double> p) {
  return DiscreteDistribution(VarSet{0}, {2}, std::move(p));
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

}  // namespace

TEST_CASE("varset keeps members sorted and rejects duplicates") {
  const VarSet s{3, 0, 2};
  CHECK(s.members() == std::vector<VarIndex>{0, 2, 3});
  CHECK(s.position(2) == 1);
  CHECK(to_string(s) == "{1,3,4}");
  CHECK(code_of([] { VarSet{1, 1}; }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { (void)s.position(1); }) == ErrorCode::NotSubset);
  CHECK(VarSet{0, 2}.is_proper_subset_of(s));
  CHECK_FALSE(s.is_proper_subset_of(s));
  CHECK(s.minus(VarSet{2}) == VarSet{0, 3});
  CHECK(VarSet{0}.united(VarSet{4}) == VarSet{0, 4});
  CHECK(VarSet{0, 1}.disjoint_from(VarSet{2}));
}

TEST_CASE("distribution validation") {
  CHECK(code_of([] { binary({0.5, 0.6}); }) == ErrorCode::InvalidDistribution);
  CHECK(code_of([] { binary({1.1, -0.1}); }) == ErrorCode::InvalidDistribution);
  CHECK(code_of([] { DiscreteDistribution(VarSet{0, 1}, {2, 2}, {0.5, 0.5}); }) ==
        ErrorCode::InvalidDistribution);
  CHECK_NOTHROW(binary({0.5, 0.5 + 5e-13}));
}

TEST_CASE("marginalize") {
  SUBCASE("uniform stays uniform") {
    const auto h = DiscreteDistribution::uniform(VarSet{0, 1}, {2, 2});
    const auto m = marginalize(h, VarSet{0});
    CHECK(m.scope() == VarSet{0});
    CHECK(m[0] == doctest::Approx(0.5));
    CHECK(m[1] == doctest::Approx(0.5));
  }
  SUBCASE("column sums") {
    const DiscreteDistribution h(VarSet{0, 1}, {2, 2}, {0.1, 0.2, 0.3, 0.4});
    const auto m = marginalize(h, VarSet{1});
    CHECK(m[0] == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(m[1] == doctest::Approx(0.6).epsilon(1e-15));
  }
  SUBCASE("random tensors against the loop oracle") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      const auto h = random_distribution(rng, VarSet{0, 1, 2}, {2, 3, 4}, 0.0);
      const auto m = marginalize(h, VarSet{0, 2});
      const auto oracle = loop_marginal(h, {0, 2});
      REQUIRE(m.size() == oracle.size());
      for (std::size_t i = 0; i < m.size(); ++i) CHECK(std::abs(m[i] - oracle[i]) < 1e-15);
    }
  }
  SUBCASE("idempotent through chains") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 50; ++trial) {
      const auto h = random_distribution(rng, VarSet{0, 1, 2, 3}, {2, 3, 2, 3}, 0.0);
      const auto direct = marginalize(h, VarSet{1, 3});
      const auto chained = marginalize(marginalize(h, VarSet{0, 1, 3}), VarSet{1, 3});
      for (std::size_t i = 0; i < direct.size(); ++i) {
        CHECK(std::abs(direct[i] - chained[i]) < 1e-12);
      }
      const auto full = marginalize(h, h.scope());
      for (std::size_t i = 0; i < h.size(); ++i) CHECK(full[i] == h[i]);
    }
  }
  SUBCASE("foreign variables are rejected") {
    const auto h = DiscreteDistribution::uniform(VarSet{0, 1}, {2, 2});
    CHECK(code_of([&] { marginalize(h, VarSet{2}); }) == ErrorCode::NotSubset);
  }
}

TEST_CASE("kl divergence") {
  CHECK(kl_divergence(binary({0.3, 0.7}), binary({0.3, 0.7})) == 0.0);
  CHECK(kl_divergence(binary({0.5, 0.5}), binary({0.25, 0.75})) ==
        doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0)).epsilon(1e-14));
  CHECK(kl_divergence(binary({0.5, 0.5}), binary({0.25, 0.75})) ==
        doctest::Approx(0.14384).epsilon(1e-4));
  CHECK(kl_divergence(binary({1.0, 0.0}), binary({0.5, 0.5})) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(code_of([] { kl_divergence(binary({0.5, 0.5}), binary({1.0, 0.0})); }) ==
        ErrorCode::SupportViolation);
  CHECK(code_of([] {
          kl_divergence(binary({0.5, 0.5}), DiscreteDistribution(VarSet{1}, {2}, {0.5, 0.5}));
        }) == ErrorCode::ScopeMismatch);

  SUBCASE("non-negative, zero only on equality, Pinsker") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 500; ++trial) {
      const auto q = random_distribution(rng, VarSet{0, 1}, {3, 2}, 0.001);
      const auto h = random_distribution(rng, VarSet{0, 1}, {3, 2}, 0.001);
      const double kl = kl_divergence(q, h);
      CHECK(kl > 0.0);
      CHECK(kl_divergence(q, q) == 0.0);
      CHECK(total_variation(q, h) <= std::sqrt(kl / 2.0) + 1e-15);
    }
  }
  SUBCASE("tiny perturbations keep full relative accuracy") {
    const double e = 1e-9;
    const double kl = kl_divergence(binary({0.5 + e, 0.5 - e}), binary({0.5, 0.5}));
    CHECK(kl == doctest::Approx(2.0 * e * e).epsilon(1e-6));
  }
}

TEST_CASE("total variation") {
  CHECK(total_variation(binary({0.3, 0.7}), binary({0.3, 0.7})) == 0.0);
  CHECK(total_variation(binary({1.0, 0.0}), binary({0.0, 1.0})) == 1.0);
  CHECK(total_variation(binary({0.3, 0.7}), binary({0.4, 0.6})) ==
        doctest::Approx(0.1).epsilon(1e-14));
}

TEST_CASE("gaussian kl") {
  auto n1 = [](double m, double v) {
    return GaussianDistribution(VarSet{0}, Eigen::VectorXd::Constant(1, m),
                                Eigen::MatrixXd::Constant(1, 1, v));
  };
  CHECK(gaussian_kl(n1(0.3, 2.0), n1(0.3, 2.0)) == doctest::Approx(0.0));
  CHECK(gaussian_kl(n1(0, 1), n1(0, 2)) ==
        doctest::Approx(0.5 * (0.5 - 1.0 + std::log(2.0))).epsilon(1e-14));
  CHECK(gaussian_kl(n1(0, 1), n1(0, 2)) == doctest::Approx(0.09657).epsilon(1e-4));
  CHECK(gaussian_kl(n1(1, 1), n1(0, 1)) == doctest::Approx(0.5).epsilon(1e-14));

  SUBCASE("matches the closed form in three dimensions") {
    const Eigen::MatrixXd s0 = example1_after_x3();
    const Eigen::MatrixXd s1 = example1_after_x2();
    Eigen::VectorXd m0(3), m1(3);
    m0 << 0.1, -0.2, 0.3;
    m1 << 0.0, 0.5, -1.0;
    const GaussianDistribution q(VarSet{0, 1, 2}, m0, s0), h(VarSet{0, 1, 2}, m1, s1);
    const Eigen::MatrixXd inv = s1.inverse();
    const Eigen::VectorXd dm = m1 - m0;
    const double oracle = 0.5 * ((inv * s0).trace() - 3.0 + dm.dot(inv * dm) +
                                 std::log(s1.determinant() / s0.determinant()));
    CHECK(gaussian_kl(q, h) == doctest::Approx(oracle).epsilon(1e-12));
  }
  CHECK(code_of([&] { gaussian_kl(n1(0, 1), GaussianDistribution::standard(VarSet{1})); }) ==
        ErrorCode::ScopeMismatch);
}

TEST_CASE("gaussian validation") {
  Eigen::MatrixXd asym(2, 2);
  asym << 1, 0.5, 0.4, 1;
  CHECK_FALSE(is_positive_definite(asym));
  CHECK_FALSE(is_positive_definite(mat2(1, 1, 1, 1)));
  CHECK(is_positive_definite(mat2(2, 1, 1, 2)));
  CHECK(code_of([] {
          GaussianDistribution(VarSet{0, 1}, Eigen::VectorXd::Zero(2), mat2(1, 2, 2, 1));
        }) == ErrorCode::NotPositiveDefinite);
  CHECK(code_of([] { scalar_gaussian(0, VarSet{1}, {1.0}, -1.0); }) ==
        ErrorCode::NotPositiveDefinite);
  CHECK(code_of([] { scalar_gaussian(0, VarSet{0}, {1.0}, 1.0); }) ==
        ErrorCode::InvalidModel);
}

TEST_CASE("derive conditionals") {
  SUBCASE("uniform joint gives uniform slices") {
    const auto f = DiscreteDistribution::uniform(VarSet::range(3), {2, 2, 2});
    const auto blocks = full_blocks(3);
    const auto model = derive_conditionals(f, blocks);
    CHECK(model.size() == 3);
    for (const auto& c : model.discrete()) {
      for (double p : c.table()) CHECK(p == doctest::Approx(0.5));
    }
  }
  SUBCASE("independence") {
    const DiscreteDistribution f(VarSet{0, 1}, {2, 2}, {0.3 * 0.4, 0.3 * 0.6, 0.7 * 0.4, 0.7 * 0.6});
    const auto c = derive_conditional(f, VarSet{0}, VarSet{1});
    for (std::size_t p = 0; p < 2; ++p) {
      CHECK(c.prob(p, 0) == doctest::Approx(0.3).epsilon(1e-14));
      CHECK(c.prob(p, 1) == doctest::Approx(0.7).epsilon(1e-14));
    }
  }
  SUBCASE("reassembly reproduces the joint marginal") {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 50; ++trial) {
      const auto f = random_distribution(rng, VarSet::range(3), {2, 2, 2});
      const std::vector<Block> blocks{{VarSet{0}, VarSet{1}},
                                      {VarSet{2}, VarSet{0}},
                                      {VarSet{1}, VarSet{0, 2}},
                                      {VarSet{0, 2}, VarSet{}}};
      const auto model = derive_conditionals(f, blocks);
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& c = model.discrete()[i];
        const auto scope = c.scope();
        const auto parent = marginalize(f, c.parents());
        const auto joint = reassemble(c, parent);
        std::vector<std::size_t> keep;
        for (auto v : scope) keep.push_back(v);
        const auto oracle = loop_marginal(f, keep);
        for (std::size_t k = 0; k < joint.size(); ++k) {
          CHECK(std::abs(joint[k] - oracle[k]) < 1e-12);
        }
      }
    }
  }
  SUBCASE("zero parent configuration") {
    const DiscreteDistribution f(VarSet{0, 1}, {2, 2}, {0.5, 0.0, 0.5, 0.0});
    CHECK(code_of([&] { derive_conditional(f, VarSet{0}, VarSet{1}); }) ==
          ErrorCode::ZeroMarginal);
  }
}

TEST_CASE("model validation") {
  SUBCASE("fixtures") {
    const auto m = example1();
    CHECK(m.family() == Family::Gaussian);
    CHECK(m.size() == 3);
    CHECK(m.is_full(0));
    const auto m2 = example2();
    CHECK_FALSE(m2.is_full(1));
    CHECK(m2.scope(1) == VarSet{1, 2});
  }
  SUBCASE("single conditional") {
    std::vector<GaussianConditional> c{scalar_gaussian(0, VarSet{1}, {0.5}, 1.0)};
    CHECK(code_of([&] { ConditionalModel(continuous_vars(2), c); }) == ErrorCode::InvalidModel);
  }
  SUBCASE("unknown variable") {
    std::vector<GaussianConditional> c{scalar_gaussian(0, VarSet{1}, {0.5}, 1.0),
                                       scalar_gaussian(1, VarSet{3}, {0.5}, 1.0)};
    CHECK(code_of([&] { ConditionalModel(continuous_vars(2), c); }) == ErrorCode::InvalidModel);
  }
  SUBCASE("family must match variable kind") {
    std::vector<GaussianConditional> c{scalar_gaussian(0, VarSet{1}, {0.5}, 1.0),
                                       scalar_gaussian(1, VarSet{0}, {0.5}, 1.0)};
    CHECK(code_of([&] { ConditionalModel(discrete_vars({2, 2}), c); }) ==
          ErrorCode::InvalidModel);
  }
  SUBCASE("support sizes must match declarations") {
    std::vector<DiscreteConditional> c;
    c.emplace_back(VarSet{0}, std::vector<std::size_t>{3}, VarSet{1},
                   std::vector<std::size_t>{2},
                   std::vector<double>{0.2, 0.3, 0.5, 0.2, 0.3, 0.5});
    c.emplace_back(VarSet{1}, std::vector<std::size_t>{2}, VarSet{0},
                   std::vector<std::size_t>{2}, std::vector<double>{0.5, 0.5, 0.5, 0.5});
    CHECK(code_of([&] { ConditionalModel(discrete_vars({2, 2}), c); }) ==
          ErrorCode::InvalidModel);
  }
}
