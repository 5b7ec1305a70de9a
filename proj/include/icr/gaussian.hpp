#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "icr/cycles.hpp"
#include "icr/discrete_icr.hpp"
#include "icr/model.hpp"

namespace icr {

struct GaussianIcrConfig {
  std::size_t max_cycles = 100000;
  /// Bound on the Frobenius norm of successive same-position covariance
  /// differences (and the Euclidean norm of mean differences).
  double frob_tol = 1e-10;
  /// Iteration is declared divergent once any |covariance entry| exceeds this.
  double blowup_threshold = 1e12;

  void validate() const;
};

enum class GaussianIcrStatus { Converged, Blowup, MaxCycles };

std::string to_string(GaussianIcrStatus status);

struct GaussianTraceRow {
  std::size_t cycle;
  std::size_t position;
  double kl_gap;  // NaN when an iterate is numerically singular
  double frob_gap;
};

struct GaussianIcrReport {
  UpdatingCycle cycle;
  GaussianIcrStatus status = GaussianIcrStatus::MaxCycles;
  /// One limit per cycle position (same indexing as IcrReport); empty
  /// unless the run converged.
  std::vector<GaussianDistribution> stationary;
  /// Per-position Gaussian KL between successive visits.
  std::vector<std::vector<double>> traces;
  std::vector<GaussianTraceRow> rows;
  std::size_t cycles_used = 0;
  std::optional<bool> compatible;

  bool converged() const noexcept { return status == GaussianIcrStatus::Converged; }
};

/// Moment-form replacement: on scope a u b, mean_a = A mu_b + c,
/// Cov(a) = A S_b A^T + cond_cov, Cov(a,b) = A S_b, and (mu_b, S_b) copied.
GaussianDistribution gaussian_replacement(const GaussianDistribution& h,
                                          const GaussianConditional& f);

GaussianIcrReport gaussian_icr_run(const ConditionalModel& model,
                                   const UpdatingCycle& cycle,
                                   const GaussianDistribution& q0,
                                   const GaussianIcrConfig& cfg = {});

/// Starts from N(0, I) on the scope of the last conditional of the cycle.
GaussianIcrReport gaussian_icr_run(const ConditionalModel& model,
                                   const UpdatingCycle& cycle,
                                   const GaussianIcrConfig& cfg = {});

/// Trivariate Gaussian from its three bivariate margins (any input order;
/// the scopes must be the three pairs of one 3-variable set).
GaussianDistribution assemble_trivariate(const GaussianDistribution& m12,
                                         const GaussianDistribution& m23,
                                         const GaussianDistribution& m13);

/// Largest absolute difference over means and covariance entries.
double max_parameter_difference(const GaussianDistribution& a,
                                const GaussianDistribution& b);

std::vector<GaussianDistribution> gaussian_propagate_round(
    const ConditionalModel& model, const UpdatingCycle& cycle, std::size_t position,
    const GaussianDistribution& limit);

/// Parameter tolerance 1e-8 for both the single-step map and the shared
/// parent marginals.
StationarityCheck gaussian_mutual_stationarity_check(
    const std::vector<GaussianDistribution>& limits, const ConditionalModel& model,
    const UpdatingCycle& cycle);

struct GaussianCompatibilityResult {
  Compatibility verdict;
  double max_pairwise_difference;
  GaussianIcrReport report;
};

GaussianCompatibilityResult gaussian_compatibility_check(
    const ConditionalModel& model, const UpdatingCycle& cycle,
    const GaussianIcrConfig& cfg = {}, double tol = 1e-8);

/// "241/50" when x is within 1e-9 of a fraction with denominator <= 512.
std::optional<std::string> rational_approximation(double x);

/// CSV with header cycle_index,position,kl_gap,frob_gap.
void write_trace_csv(const GaussianIcrReport& report, std::ostream& out);

}  // namespace icr
