#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "icr/cycles.hpp"
#include "icr/model.hpp"

namespace icr {

enum class TrackMetric { KL, TV };

/// Stopping rule for the discrete iteration: stop once every per-position
/// gap between successive visits (in the tracked metric) is below its
/// tolerance. KL is quadratic in the perturbation, so kl_tol = 1e-24
/// corresponds to a total-variation gap of roughly 1e-12.
struct IcrConfig {
  std::size_t max_cycles = 10000;
  double kl_tol = 1e-24;
  double tv_tol = 1e-12;
  TrackMetric track = TrackMetric::KL;

  void validate() const;
};

struct TraceRow {
  std::size_t cycle;
  std::size_t position;
  double kl_gap;
  double tv_gap;
};

struct IcrReport {
  UpdatingCycle cycle;
  /// stationary[i] is the limit of the output of the i-th step of the
  /// cycle, living on the scope of conditional cycle.order[i].
  std::vector<DiscreteDistribution> stationary;
  /// Per-position KL gaps between successive visits, in cycle order.
  std::vector<std::vector<double>> traces;
  std::vector<TraceRow> rows;
  bool converged = false;
  std::size_t cycles_used = 0;
  std::optional<bool> compatible;
};

/// f_{a|b} * h_b on scope a u b: replaces h's (a|b)-conditional while
/// keeping its b-marginal. Parent slices with zero mass stay zero.
DiscreteDistribution conditional_replacement(const DiscreteDistribution& h,
                                             const DiscreteConditional& f);

/// Transition matrix over the joint states of a u b for the kernel that
/// redraws the target block from f and keeps the parents; row-major over
/// the sorted scope.
Eigen::MatrixXd transition_matrix(const DiscreteConditional& f);

/// q * T with T = transition_matrix(f); requires scope(q) = a u b.
DiscreteDistribution markov_kernel_apply(const DiscreteDistribution& q,
                                         const DiscreteConditional& f);

/// Iterates the conditional replacements of `cycle` starting from q0, which
/// must live on the scope of the last conditional in the cycle.
IcrReport icr_run(const ConditionalModel& model, const UpdatingCycle& cycle,
                  const DiscreteDistribution& q0, const IcrConfig& cfg = {});

/// Same, starting from the uniform distribution.
IcrReport icr_run(const ConditionalModel& model, const UpdatingCycle& cycle,
                  const IcrConfig& cfg = {});

/// Fixed point of the composite operator at `position`, found by solving
/// the explicit linear map on vectorized distributions. Independent of the
/// iterative route; limited to 4096 joint states.
DiscreteDistribution brute_force_fixed_point(const ConditionalModel& model,
                                             const UpdatingCycle& cycle,
                                             std::size_t position);

/// Applies the remaining steps of one round starting from the limit at
/// `position`; result[j] is the distribution produced at position j.
std::vector<DiscreteDistribution> propagate_round(const ConditionalModel& model,
                                                  const UpdatingCycle& cycle,
                                                  std::size_t position,
                                                  const DiscreteDistribution& limit);

enum class Compatibility { Compatible, Incompatible, Undecidable };

std::string to_string(Compatibility c);

struct CompatibilityResult {
  Compatibility verdict;
  double max_pairwise_tv;
  IcrReport report;
};

/// Requires every conditional to be full. Compatible iff the L stationary
/// joints agree pairwise within `tol` in total variation.
CompatibilityResult compatibility_check(const ConditionalModel& model,
                                        const UpdatingCycle& cycle,
                                        const IcrConfig& cfg = {},
                                        double tol = 1e-9);

struct StationarityCheck {
  bool ok = true;
  std::optional<std::size_t> failing_position;
  std::string diagnostic;
};

/// Single-step replacement maps limit i to limit i+1 (TV <= 1e-9) and
/// neighbours share the next step's parent marginal.
StationarityCheck mutual_stationarity_check(
    const std::vector<DiscreteDistribution>& stationary,
    const ConditionalModel& model, const UpdatingCycle& cycle);

/// CSV with header cycle_index,position,kl_gap,tv_gap.
void write_trace_csv(const IcrReport& report, std::ostream& out);

}  // namespace icr
