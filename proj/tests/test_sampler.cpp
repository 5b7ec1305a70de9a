#include <cmath>
#include <random>

#include "doctest.h"
#include "icr/gaussian.hpp"
#include "icr/sampler.hpp"
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

ChainConfig short_chain(std::size_t samples, std::uint64_t seed) {
  ChainConfig cfg;
  cfg.burn_in = 1000;
  cfg.samples = samples;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("configuration") {
  ChainConfig cfg;
  cfg.samples = 0;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
  cfg = {};
  cfg.batches = 1;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
  cfg = {};
  cfg.samples = 10;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
  CHECK_NOTHROW(ChainConfig{}.validate());
}

TEST_CASE("gaussian chain reproduces each position's limit") {
  const auto model = example1();
  const auto cycle = cycle_of(model, {1, 0, 2});
  const auto limits = gaussian_icr_run(model, cycle).stationary;
  REQUIRE(limits.size() == 3);
  const auto batches = run_chain(model, cycle, short_chain(200000, 7));
  REQUIRE(batches.size() == 3);
  for (std::size_t p = 0; p < 3; ++p) {
    CHECK(batches[p].count == 200000);
    CHECK(batches[p].scope == VarSet{0, 1, 2});
    const auto c = compare(batches[p], limits[p]);
    INFO("position " << p << " worst " << c.worst_entry << " z " << c.max_z);
    CHECK(c.pass);
    CHECK(c.max_z < 4.0);
  }
  // Positions estimate different laws: Cov(X2, X3) is 21/50 after the X3
  // update and -61/50 after the X2 update.
  CHECK(std::abs(batches[2].empirical_cov(1, 2) - 21.0 / 50.0) < 0.05);
  CHECK(std::abs(batches[0].empirical_cov(1, 2) + 61.0 / 50.0) < 0.05);
  CHECK_FALSE(compare(batches[2], limits[0]).pass);
}

TEST_CASE("non-full updates leave other coordinates alone") {
  const auto model = example2();
  const auto cycle = cycle_of(model, {0, 2, 1});
  const auto limits = gaussian_icr_run(model, cycle).stationary;
  const auto batches = run_chain(model, cycle, short_chain(200000, 8));
  for (std::size_t p = 0; p < 3; ++p) {
    CHECK(batches[p].scope == model.scope(cycle.order[p]));
    const auto c = compare(batches[p], limits[p]);
    INFO("position " << p << " worst " << c.worst_entry << " z " << c.max_z);
    CHECK(c.pass);
  }
}

TEST_CASE("discrete chain on compatible conditionals") {
  std::mt19937_64 rng(61);
  const auto f = random_distribution(rng, VarSet::range(3), {2, 3, 2});
  SUBCASE("full conditionals") {
    const auto model = derive_conditionals(f, full_blocks(3));
    const auto batches = run_chain(model, cycle_of(model, {0, 1, 2}), short_chain(100000, 9));
    for (const auto& b : batches) {
      REQUIRE(b.empirical_table.has_value());
      double sum = 0.0;
      for (double v : b.empirical_table->table()) sum += v;
      CHECK(sum == doctest::Approx(1.0));
      const auto c = compare(b, f);
      INFO("worst " << c.worst_entry << " z " << c.max_z);
      CHECK(c.pass);
    }
  }
  SUBCASE("partially collapsed conditionals") {
    const auto model = derive_conditionals(f, pcgs_blocks());
    const auto cycle = cycle_of(model, {0, 1, 2});
    const auto batches = run_chain(model, cycle, short_chain(100000, 10));
    for (std::size_t p = 0; p < 3; ++p) {
      const auto want = marginalize(f, model.scope(cycle.order[p]));
      const auto c = compare(batches[p], want);
      INFO("position " << p << " worst " << c.worst_entry << " z " << c.max_z);
      CHECK(c.pass);
    }
  }
}

TEST_CASE("incompatible discrete chain matches its own order only") {
  const auto model = incompatible_binary();
  const auto batches = run_chain(model, cycle_of(model, {0, 1}), short_chain(50000, 11));
  const DiscreteDistribution after_first(VarSet{0, 1}, {2, 2}, {0.45, 0.05, 0.05, 0.45});
  const auto uniform = DiscreteDistribution::uniform(VarSet{0, 1}, {2, 2});
  CHECK(compare(batches[0], after_first).pass);
  CHECK(compare(batches[1], uniform).pass);
  CHECK_FALSE(compare(batches[0], uniform).pass);
}

TEST_CASE("seeding") {
  const auto model = example1();
  const auto cycle = cycle_of(model, {1, 0, 2});
  const auto a = run_chain(model, cycle, short_chain(5000, 99));
  const auto b = run_chain(model, cycle, short_chain(5000, 99));
  const auto c = run_chain(model, cycle, short_chain(5000, 100));
  for (std::size_t p = 0; p < 3; ++p) {
    CHECK(a[p].empirical_cov == b[p].empirical_cov);
    CHECK(a[p].cov_se == b[p].cov_se);
    CHECK(a[p].empirical_mean == b[p].empirical_mean);
    CHECK(a[p].empirical_cov != c[p].empirical_cov);
  }
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));

  const auto chains = run_chains(model, cycle, short_chain(5000, 99), 3);
  REQUIRE(chains.size() == 3);
  auto cfg0 = short_chain(5000, derive_seed(99, 1));
  const auto solo = run_chain(model, cycle, cfg0);
  CHECK(chains[0][1].empirical_cov == solo[1].empirical_cov);
  CHECK(chains[0][1].empirical_cov != chains[1][1].empirical_cov);
}

TEST_CASE("comparison guards") {
  const auto model = example1();
  const auto cycle = cycle_of(model, {1, 0, 2});
  const auto batches = run_chain(model, cycle, short_chain(1000, 5));
  CHECK(code_of([&] { compare(batches[0], GaussianDistribution::standard(VarSet{0, 1})); }) ==
        ErrorCode::ScopeMismatch);
  BatchSummary empty = batches[0];
  empty.count = 0;
  CHECK(code_of([&] { compare(empty, GaussianDistribution::standard(VarSet{0, 1, 2})); }) ==
        ErrorCode::EmptySample);

  const auto rejected = is_permissible(example2(), Order{0, 1, 2});
  CHECK(code_of([&] { run_chain(example2(), rejected, short_chain(1000, 1)); }) ==
        ErrorCode::NotPermissible);
}
