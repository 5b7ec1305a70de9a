#include "icr/discrete_icr.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include <Eigen/Sparse>

#include "tensor_index.hpp"

namespace icr {

namespace {

constexpr std::size_t kMaxOracleStates = 4096;
constexpr double kStationaryTv = 1e-9;
constexpr double kSingularRcond = 1e-12;

// Plain div/mod encoding, kept separate from the odometer so the explicit
// linear-map oracle does not share indexing code with the iterative path.
std::vector<std::size_t> decode(std::size_t index,
                                const std::vector<std::size_t>& dims) {
  std::vector<std::size_t> digits(dims.size());
  for (std::size_t k = dims.size(); k-- > 0;) {
    digits[k] = index % dims[k];
    index /= dims[k];
  }
  return digits;
}

std::size_t encode(const std::vector<std::size_t>& digits,
                   const std::vector<std::size_t>& dims) {
  std::size_t index = 0;
  for (std::size_t k = 0; k < dims.size(); ++k) index = index * dims[k] + digits[k];
  return index;
}

/// Value of variable v in a configuration over `scope`.
std::size_t digit_of(const VarSet& scope, const std::vector<std::size_t>& digits,
                     VarIndex v) {
  return digits[scope.position(v)];
}

/// f(y_a | y_b) for a configuration `y` over a superset of a u b.
double conditional_prob(const DiscreteConditional& f, const VarSet& scope,
                        const std::vector<std::size_t>& y) {
  std::vector<std::size_t> t, p;
  for (VarIndex v : f.target()) t.push_back(digit_of(scope, y, v));
  for (VarIndex v : f.parents()) p.push_back(digit_of(scope, y, v));
  return f.prob(encode(p, f.parent_dims()), encode(t, f.target_dims()));
}

/// Column-stochastic matrix of one replacement step from H_{from} to
/// H_{c_next}: entry (y, x) = f(y_a | y_b) [x_b = y_b].
Eigen::SparseMatrix<double> step_matrix(const ConditionalModel& model, const VarSet& from,
                                        const DiscreteConditional& next) {
  const VarSet to = next.scope();
  const auto from_dims = model.dims_of(from);
  const auto to_dims = model.dims_of(to);
  const std::size_t n_from = detail::product(from_dims);
  const std::size_t n_to = detail::product(to_dims);
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(n_from * next.target_configs());
  std::vector<std::size_t> yd(to.size());
  for (std::size_t x = 0; x < n_from; ++x) {
    const auto xd = decode(x, from_dims);
    for (std::size_t t = 0; t < next.target_configs(); ++t) {
      const auto td = decode(t, next.target_dims());
      for (std::size_t k = 0; k < to.size(); ++k) {
        const VarIndex v = to[k];
        yd[k] = next.target().contains(v) ? td[next.target().position(v)]
                                          : digit_of(from, xd, v);
      }
      const double p = conditional_prob(next, to, yd);
      if (p != 0.0) entries.emplace_back(Eigen::Index(encode(yd, to_dims)), Eigen::Index(x), p);
    }
  }
  Eigen::SparseMatrix<double> m{Eigen::Index(n_to), Eigen::Index(n_from)};
  m.setFromTriplets(entries.begin(), entries.end());
  return m;
}

double safe_kl(const DiscreteDistribution& q, const DiscreteDistribution& h) {
  try {
    return kl_divergence(q, h);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SupportViolation) {
      return std::numeric_limits<double>::infinity();
    }
    throw;
  }
}

const DiscreteConditional& conditional_at(const ConditionalModel& model,
                                          const UpdatingCycle& cycle,
                                          std::size_t position) {
  return model.discrete()[cycle.order[position % cycle.order.size()]];
}

}  // namespace

void IcrConfig::validate() const {
  if (max_cycles < 1) throw Error(ErrorCode::InvalidArgument, "max_cycles must be >= 1");
  if (!(kl_tol > 0.0) || !(tv_tol > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "tolerances must be positive");
  }
}

DiscreteDistribution conditional_replacement(const DiscreteDistribution& h,
                                             const DiscreteConditional& f) {
  if (!f.parents().is_subset_of(h.scope())) {
    throw Error(ErrorCode::NotPermissibleStep,
                "parents " + to_string(f.parents()) + " not contained in " +
                    to_string(h.scope()));
  }
  for (std::size_t k = 0; k < f.parents().size(); ++k) {
    if (h.dim_of(f.parents()[k]) != f.parent_dims()[k]) {
      throw Error(ErrorCode::ScopeMismatch, "support sizes of parents disagree");
    }
  }
  return reassemble(f, marginalize(h, f.parents()));
}

Eigen::MatrixXd transition_matrix(const DiscreteConditional& f) {
  const VarSet scope = f.scope();
  std::vector<std::size_t> dims;
  for (VarIndex v : scope) {
    dims.push_back(f.target().contains(v) ? f.target_dims()[f.target().position(v)]
                                          : f.parent_dims()[f.parents().position(v)]);
  }
  const std::size_t n = detail::product(dims);
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(Eigen::Index(n), Eigen::Index(n));
  for (std::size_t x = 0; x < n; ++x) {
    const auto xd = decode(x, dims);
    for (std::size_t y = 0; y < n; ++y) {
      const auto yd = decode(y, dims);
      bool keeps_parents = true;
      for (VarIndex v : f.parents()) {
        keeps_parents = keeps_parents && digit_of(scope, xd, v) == digit_of(scope, yd, v);
      }
      if (keeps_parents) t(Eigen::Index(x), Eigen::Index(y)) = conditional_prob(f, scope, yd);
    }
  }
  return t;
}

DiscreteDistribution markov_kernel_apply(const DiscreteDistribution& q,
                                         const DiscreteConditional& f) {
  if (!f.parents().is_subset_of(q.scope())) {
    throw Error(ErrorCode::NotPermissibleStep,
                "parents " + to_string(f.parents()) + " not contained in " +
                    to_string(q.scope()));
  }
  if (q.scope() != f.scope()) {
    throw Error(ErrorCode::ScopeMismatch,
                "kernel form needs q on exactly " + to_string(f.scope()));
  }
  const Eigen::MatrixXd t = transition_matrix(f);
  if (std::size_t(t.rows()) != q.size()) {
    throw Error(ErrorCode::ScopeMismatch, "support sizes disagree");
  }
  Eigen::RowVectorXd row(t.rows());
  for (std::size_t i = 0; i < q.size(); ++i) row(Eigen::Index(i)) = q[i];
  const Eigen::RowVectorXd out = row * t;
  return DiscreteDistribution(q.scope(), q.dims(),
                              std::vector<double>(out.data(), out.data() + out.size()));
}

IcrReport icr_run(const ConditionalModel& model, const UpdatingCycle& cycle,
                  const DiscreteDistribution& q0, const IcrConfig& cfg) {
  cfg.validate();
  require_permissible(cycle);
  const std::size_t L = cycle.order.size();
  const VarSet start_scope = model.scope(cycle.order.back());
  if (q0.scope() != start_scope || q0.dims() != model.dims_of(start_scope)) {
    throw Error(ErrorCode::ScopeMismatch,
                "q0 must live on " + to_string(start_scope) + ", got " +
                    to_string(q0.scope()));
  }
  const double tol = cfg.track == TrackMetric::KL ? cfg.kl_tol : cfg.tv_tol;

  IcrReport report;
  report.cycle = cycle;
  report.traces.resize(L);
  std::vector<std::optional<DiscreteDistribution>> previous(L);
  previous[L - 1] = q0;
  DiscreteDistribution current = q0;

  for (std::size_t k = 0; k < cfg.max_cycles; ++k) {
    bool below = true;
    for (std::size_t i = 0; i < L; ++i) {
      current = conditional_replacement(current, conditional_at(model, cycle, i));
      if (previous[i]) {
        const double kl = safe_kl(current, *previous[i]);
        const double tv = total_variation(current, *previous[i]);
        report.traces[i].push_back(kl);
        report.rows.push_back({k, i, kl, tv});
        const double gap = cfg.track == TrackMetric::KL ? kl : tv;
        below = below && gap < tol;
      }
      previous[i] = current;
    }
    report.cycles_used = k + 1;
    // Replacement steps contract both KL and TV, so a small gap at the last
    // position bounds the gaps of every later visit; cycle 0 relies on this
    // for the positions that have no earlier visit yet.
    if (below) {
      report.converged = true;
      break;
    }
  }
  for (auto& p : previous) report.stationary.push_back(std::move(*p));
  return report;
}

IcrReport icr_run(const ConditionalModel& model, const UpdatingCycle& cycle,
                  const IcrConfig& cfg) {
  if (cycle.order.empty()) require_permissible(cycle);
  const VarSet scope = model.scope(cycle.order.back());
  return icr_run(model, cycle, DiscreteDistribution::uniform(scope, model.dims_of(scope)),
                 cfg);
}

DiscreteDistribution brute_force_fixed_point(const ConditionalModel& model,
                                             const UpdatingCycle& cycle,
                                             std::size_t position) {
  require_permissible(cycle);
  const std::size_t L = cycle.order.size();
  if (position >= L) throw Error(ErrorCode::InvalidArgument, "position out of range");
  const auto all = model.all_variables();
  if (detail::product(model.dims_of(all)) > kMaxOracleStates) {
    throw Error(ErrorCode::StateSpaceTooLarge,
                "joint state space exceeds " + std::to_string(kMaxOracleStates));
  }

  const VarSet home = model.scope(cycle.order[position]);
  const auto home_dims = model.dims_of(home);
  const auto n = Eigen::Index(detail::product(home_dims));
  Eigen::MatrixXd composite = Eigen::MatrixXd::Identity(n, n);
  VarSet from = home;
  for (std::size_t j = 1; j <= L; ++j) {
    const auto& next = conditional_at(model, cycle, position + j);
    composite = step_matrix(model, from, next) * composite;
    from = next.scope();
  }

  // Columns of the composite sum to one, so the rows of (M - I) are
  // dependent. Swapping one of them for the normalization row gives a system
  // that is regular exactly when the eigenvalue-1 eigenspace is a line.
  Eigen::MatrixXd system = composite - Eigen::MatrixXd::Identity(n, n);
  system.row(n - 1).setOnes();
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  // The rcond estimate can miss an exactly zero pivot, so check the pivots too.
  const Eigen::VectorXd pivots = lu.matrixLU().diagonal().cwiseAbs();
  const double rcond = lu.rcond();
  if (!(pivots.minCoeff() > kSingularRcond * pivots.maxCoeff()) || !(rcond >= kSingularRcond)) {
    throw Error(ErrorCode::NonUniqueFixedPoint,
                "fixed-point system is singular (reciprocal condition " + std::to_string(rcond) +
                    ", smallest pivot " + std::to_string(pivots.minCoeff()) + ")");
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;
  const Eigen::VectorXd fixed = lu.solve(rhs);

  std::vector<double> table(fixed.data(), fixed.data() + fixed.size());
  double sum = 0.0;
  for (double& v : table) {
    if (v < 0.0 && v > -1e-12) v = 0.0;
    sum += v;
  }
  for (double& v : table) v /= sum;
  return DiscreteDistribution(home, home_dims, std::move(table));
}

std::vector<DiscreteDistribution> propagate_round(const ConditionalModel& model,
                                                  const UpdatingCycle& cycle,
                                                  std::size_t position,
                                                  const DiscreteDistribution& limit) {
  const std::size_t L = cycle.order.size();
  std::vector<std::optional<DiscreteDistribution>> out(L);
  DiscreteDistribution current = limit;
  for (std::size_t j = 1; j <= L; ++j) {
    current = conditional_replacement(current, conditional_at(model, cycle, position + j));
    out[(position + j) % L] = current;
  }
  std::vector<DiscreteDistribution> result;
  for (auto& d : out) result.push_back(std::move(*d));
  return result;
}

std::string to_string(Compatibility c) {
  switch (c) {
    case Compatibility::Compatible: return "compatible";
    case Compatibility::Incompatible: return "incompatible";
    case Compatibility::Undecidable: return "undecidable";
  }
  return "undecidable";
}

CompatibilityResult compatibility_check(const ConditionalModel& model,
                                        const UpdatingCycle& cycle,
                                        const IcrConfig& cfg, double tol) {
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (!model.is_full(i)) {
      throw Error(ErrorCode::NotAllFull,
                  "conditional " + std::to_string(i + 1) + " is not a full conditional");
    }
  }
  CompatibilityResult result{Compatibility::Undecidable, 0.0, icr_run(model, cycle, cfg)};
  const auto& limits = result.report.stationary;
  for (std::size_t i = 0; i < limits.size(); ++i) {
    for (std::size_t j = i + 1; j < limits.size(); ++j) {
      result.max_pairwise_tv =
          std::max(result.max_pairwise_tv, total_variation(limits[i], limits[j]));
    }
  }
  if (result.report.converged) {
    result.verdict = result.max_pairwise_tv <= tol ? Compatibility::Compatible
                                                   : Compatibility::Incompatible;
  }
  result.report.compatible = result.verdict == Compatibility::Undecidable
                                 ? std::nullopt
                                 : std::optional<bool>(result.verdict ==
                                                       Compatibility::Compatible);
  return result;
}

StationarityCheck mutual_stationarity_check(
    const std::vector<DiscreteDistribution>& stationary,
    const ConditionalModel& model, const UpdatingCycle& cycle) {
  StationarityCheck check;
  const std::size_t L = cycle.order.size();
  auto fail = [&](std::size_t i, std::string why) {
    check.ok = false;
    check.failing_position = i;
    check.diagnostic = "position " + std::to_string(i + 1) + ": " + std::move(why);
    return check;
  };
  if (stationary.size() != L) return fail(0, "expected one limit per cycle position");
  for (std::size_t i = 0; i < L; ++i) {
    if (stationary[i].scope() != model.scope(cycle.order[i])) {
      return fail(i, "scope does not match conditional " +
                         std::to_string(cycle.order[i] + 1));
    }
  }
  for (std::size_t i = 0; i < L; ++i) {
    const std::size_t next = (i + 1) % L;
    const auto& f = conditional_at(model, cycle, next);
    try {
      const auto mapped = conditional_replacement(stationary[i], f);
      const double tv = total_variation(mapped, stationary[next]);
      if (tv > kStationaryTv) {
        std::ostringstream os;
        os << "replacement maps it " << tv << " (TV) away from position " << next + 1;
        return fail(i, os.str());
      }
      const double marginal_tv = total_variation(marginalize(stationary[i], f.parents()),
                                                 marginalize(stationary[next], f.parents()));
      if (marginal_tv > kStationaryTv) {
        std::ostringstream os;
        os << "shared " << to_string(f.parents()) << "-marginal differs by " << marginal_tv;
        return fail(i, os.str());
      }
    } catch (const Error& e) {
      return fail(i, e.what());
    }
  }
  return check;
}

void write_trace_csv(const IcrReport& report, std::ostream& out) {
  out << "cycle_index,position,kl_gap,tv_gap\n";
  out << std::setprecision(17);
  for (const auto& row : report.rows) {
    out << row.cycle + 1 << ',' << row.position + 1 << ',' << row.kl_gap << ',' << row.tv_gap
        << '\n';
  }
}

}  // namespace icr
