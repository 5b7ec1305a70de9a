#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "icr/cycles.hpp"
#include "icr/model.hpp"

namespace icr {

struct ChainConfig {
  std::size_t burn_in = 10000;   // cycles discarded before recording
  std::size_t samples = 1000000;  // recorded cycles per position
  std::uint64_t seed = 0;
  std::size_t thin = 1;
  /// Non-overlapping batches used for the batch-means standard errors.
  std::size_t batches = 50;

  void validate() const;
};

/// What one cycle position saw over the recorded part of a chain: the
/// state right after that position's update, restricted to its scope.
struct BatchSummary {
  std::size_t position = 0;
  VarSet scope;
  std::size_t count = 0;
  Family family = Family::Gaussian;

  // Gaussian models.
  Eigen::VectorXd empirical_mean;
  Eigen::VectorXd mean_se;
  Eigen::MatrixXd empirical_cov;
  Eigen::MatrixXd cov_se;

  // Discrete models.
  std::optional<DiscreteDistribution> empirical_table;
  std::vector<double> table_se;
};

/// Gibbs-type chain (GS, PCGS or PGS, depending on the model) driven by the
/// conditionals in cycle order. Non-full updates leave the coordinates
/// outside the conditional's scope untouched.
std::vector<BatchSummary> run_chain(const ConditionalModel& model,
                                    const UpdatingCycle& cycle,
                                    const ChainConfig& cfg);

/// Seed for chain `stream` derived from a master seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// Independent chains on separate threads, chain k seeded with
/// derive_seed(cfg.seed, k + 1); stream 0 belongs to run_chain itself.
std::vector<std::vector<BatchSummary>> run_chains(const ConditionalModel& model,
                                                  const UpdatingCycle& cycle,
                                                  const ChainConfig& cfg,
                                                  std::size_t chains);

struct Comparison {
  double max_z = 0.0;
  bool pass = true;
  std::string worst_entry;
};

/// Per-entry z-scores of the batch against a limit; pass iff max |z| <= 4.
Comparison compare(const BatchSummary& batch, const GaussianDistribution& limit);
Comparison compare(const BatchSummary& batch, const DiscreteDistribution& limit);

}  // namespace icr
