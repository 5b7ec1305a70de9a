#include "icr/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace icr {

namespace {

constexpr double kParameterTolerance = 1e-8;

struct Moments {
  VarSet scope;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

std::vector<Eigen::Index> positions_in(const VarSet& scope, const VarSet& sub) {
  std::vector<Eigen::Index> idx;
  for (VarIndex v : sub) idx.push_back(Eigen::Index(scope.position(v)));
  return idx;
}

Moments replace(const Moments& h, const GaussianConditional& f) {
  const auto b_idx = positions_in(h.scope, f.parents());
  const auto nb = Eigen::Index(b_idx.size());
  Eigen::VectorXd mu_b(nb);
  Eigen::MatrixXd sigma_b(nb, nb);
  for (Eigen::Index r = 0; r < nb; ++r) {
    mu_b(r) = h.mean(b_idx[r]);
    for (Eigen::Index c = 0; c < nb; ++c) sigma_b(r, c) = h.cov(b_idx[r], b_idx[c]);
  }
  const Eigen::MatrixXd& A = f.coef();
  const Eigen::MatrixXd cross = A * sigma_b;  // Cov(a, b)
  Eigen::MatrixXd cov_a = cross * A.transpose() + f.cond_cov();
  cov_a = (0.5 * (cov_a + cov_a.transpose())).eval();
  const Eigen::VectorXd mean_a = A * mu_b + f.intercept();

  Moments out;
  out.scope = f.scope();
  const auto n = Eigen::Index(out.scope.size());
  out.mean.resize(n);
  out.cov.resize(n, n);
  // For each output coordinate: (is target, index within its block).
  std::vector<std::pair<bool, Eigen::Index>> where;
  for (VarIndex v : out.scope) {
    if (f.target().contains(v)) {
      where.emplace_back(true, Eigen::Index(f.target().position(v)));
    } else {
      where.emplace_back(false, Eigen::Index(f.parents().position(v)));
    }
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto [rt, ri] = where[std::size_t(r)];
    out.mean(r) = rt ? mean_a(ri) : mu_b(ri);
    for (Eigen::Index c = 0; c < n; ++c) {
      const auto [ct, ci] = where[std::size_t(c)];
      if (rt && ct) {
        out.cov(r, c) = cov_a(ri, ci);
      } else if (rt) {
        out.cov(r, c) = cross(ri, ci);
      } else if (ct) {
        out.cov(r, c) = cross(ci, ri);
      } else {
        out.cov(r, c) = sigma_b(ri, ci);
      }
    }
  }
  return out;
}

void require_step(const VarSet& scope, const GaussianConditional& f) {
  if (!f.parents().is_subset_of(scope)) {
    throw Error(ErrorCode::NotPermissibleStep,
                "parents " + to_string(f.parents()) + " not contained in " +
                    to_string(scope));
  }
}

double kl_or_nan(const Moments& q, const Moments& h) {
  try {
    return gaussian_kl(GaussianDistribution(q.scope, q.mean, q.cov),
                       GaussianDistribution(h.scope, h.mean, h.cov));
  } catch (const Error&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

const GaussianConditional& conditional_at(const ConditionalModel& model,
                                          const UpdatingCycle& cycle,
                                          std::size_t position) {
  return model.gaussian()[cycle.order[position % cycle.order.size()]];
}

}  // namespace

void GaussianIcrConfig::validate() const {
  if (max_cycles < 1 || !(frob_tol > 0.0) || !(blowup_threshold > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "Gaussian ICR settings must be positive");
  }
}

std::string to_string(GaussianIcrStatus status) {
  switch (status) {
    case GaussianIcrStatus::Converged: return "converged";
    case GaussianIcrStatus::Blowup: return "blowup";
    case GaussianIcrStatus::MaxCycles: return "max_cycles";
  }
  return "max_cycles";
}

GaussianDistribution gaussian_replacement(const GaussianDistribution& h,
                                          const GaussianConditional& f) {
  require_step(h.scope(), f);
  auto out = replace(Moments{h.scope(), h.mean(), h.covariance()}, f);
  try {
    return GaussianDistribution(std::move(out.scope), std::move(out.mean),
                                std::move(out.cov));
  } catch (const Error& e) {
    throw Error(ErrorCode::SingularCovariance, e.what());
  }
}

GaussianIcrReport gaussian_icr_run(const ConditionalModel& model,
                                   const UpdatingCycle& cycle,
                                   const GaussianDistribution& q0,
                                   const GaussianIcrConfig& cfg) {
  cfg.validate();
  require_permissible(cycle);
  const std::size_t L = cycle.order.size();
  const VarSet start = model.scope(cycle.order.back());
  if (q0.scope() != start) {
    throw Error(ErrorCode::ScopeMismatch,
                "q0 must live on " + to_string(start) + ", got " + to_string(q0.scope()));
  }
  for (std::size_t i = 0; i < L; ++i) {
    require_step(model.scope(cycle.order[i]), conditional_at(model, cycle, i + 1));
  }

  GaussianIcrReport report;
  report.cycle = cycle;
  report.traces.resize(L);
  std::vector<std::optional<Moments>> previous(L);
  previous[L - 1] = Moments{q0.scope(), q0.mean(), q0.covariance()};
  Moments current = *previous[L - 1];

  for (std::size_t k = 0; k < cfg.max_cycles; ++k) {
    bool below = true;
    for (std::size_t i = 0; i < L; ++i) {
      current = replace(current, conditional_at(model, cycle, i));
      if (!current.cov.allFinite() ||
          current.cov.cwiseAbs().maxCoeff() > cfg.blowup_threshold) {
        report.status = GaussianIcrStatus::Blowup;
        report.cycles_used = k + 1;
        return report;
      }
      if (previous[i]) {
        const double frob = (current.cov - previous[i]->cov).norm();
        const double mean_gap = (current.mean - previous[i]->mean).norm();
        const double kl = kl_or_nan(current, *previous[i]);
        report.traces[i].push_back(kl);
        report.rows.push_back({k, i, kl, frob});
        below = below && frob < cfg.frob_tol && mean_gap < cfg.frob_tol;
      }
      previous[i] = current;
    }
    report.cycles_used = k + 1;
    if (below) {
      report.status = GaussianIcrStatus::Converged;
      break;
    }
  }
  if (report.status != GaussianIcrStatus::Converged) return report;
  for (auto& p : previous) {
    report.stationary.emplace_back(std::move(p->scope), std::move(p->mean),
                                   std::move(p->cov));
  }
  return report;
}

GaussianIcrReport gaussian_icr_run(const ConditionalModel& model,
                                   const UpdatingCycle& cycle,
                                   const GaussianIcrConfig& cfg) {
  require_permissible(cycle);
  return gaussian_icr_run(
      model, cycle, GaussianDistribution::standard(model.scope(cycle.order.back())), cfg);
}

GaussianDistribution assemble_trivariate(const GaussianDistribution& m12,
                                         const GaussianDistribution& m23,
                                         const GaussianDistribution& m13) {
  const std::vector<const GaussianDistribution*> margins{&m12, &m23, &m13};
  VarSet all;
  for (const auto* m : margins) {
    if (m->scope().size() != 2) {
      throw Error(ErrorCode::InvalidArgument, "margins must be bivariate");
    }
    all = all.united(m->scope());
  }
  if (all.size() != 3 || m12.scope() == m23.scope() || m12.scope() == m13.scope() ||
      m23.scope() == m13.scope()) {
    throw Error(ErrorCode::InvalidArgument,
                "margins must cover the three pairs of one 3-variable set");
  }

  Eigen::Vector3d mean = Eigen::Vector3d::Constant(std::numeric_limits<double>::quiet_NaN());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Constant(std::numeric_limits<double>::quiet_NaN());
  for (const auto* m : margins) {
    for (Eigen::Index r = 0; r < 2; ++r) {
      const auto gr = Eigen::Index(all.position(m->scope()[std::size_t(r)]));
      const double mu = m->mean()(r);
      const double var = m->covariance()(r, r);
      if (std::isnan(mean(gr))) {
        mean(gr) = mu;
        cov(gr, gr) = var;
      } else if (std::abs(mean(gr) - mu) > kParameterTolerance ||
                 std::abs(cov(gr, gr) - var) > kParameterTolerance) {
        std::ostringstream os;
        os << "margins disagree on X" << all[std::size_t(gr)] + 1 << ": mean " << mean(gr)
           << " vs " << mu << ", variance " << cov(gr, gr) << " vs " << var;
        throw Error(ErrorCode::InconsistentMargins, os.str());
      }
    }
    const auto g0 = Eigen::Index(all.position(m->scope()[0]));
    const auto g1 = Eigen::Index(all.position(m->scope()[1]));
    cov(g0, g1) = cov(g1, g0) = m->covariance()(0, 1);
  }
  if (!is_positive_definite(cov)) {
    throw Error(ErrorCode::NotPositiveDefinite,
                "assembled covariance is not positive definite");
  }
  return GaussianDistribution(all, mean, cov);
}

double max_parameter_difference(const GaussianDistribution& a,
                                const GaussianDistribution& b) {
  if (a.scope() != b.scope()) {
    throw Error(ErrorCode::ScopeMismatch, to_string(a.scope()) + " vs " + to_string(b.scope()));
  }
  return std::max((a.mean() - b.mean()).cwiseAbs().maxCoeff(),
                  (a.covariance() - b.covariance()).cwiseAbs().maxCoeff());
}

std::vector<GaussianDistribution> gaussian_propagate_round(
    const ConditionalModel& model, const UpdatingCycle& cycle, std::size_t position,
    const GaussianDistribution& limit) {
  const std::size_t L = cycle.order.size();
  std::vector<std::optional<GaussianDistribution>> out(L);
  GaussianDistribution current = limit;
  for (std::size_t j = 1; j <= L; ++j) {
    current = gaussian_replacement(current, conditional_at(model, cycle, position + j));
    out[(position + j) % L] = current;
  }
  std::vector<GaussianDistribution> result;
  for (auto& g : out) result.push_back(std::move(*g));
  return result;
}

StationarityCheck gaussian_mutual_stationarity_check(
    const std::vector<GaussianDistribution>& limits, const ConditionalModel& model,
    const UpdatingCycle& cycle) {
  StationarityCheck check;
  const std::size_t L = cycle.order.size();
  auto fail = [&](std::size_t i, std::string why) {
    check.ok = false;
    check.failing_position = i;
    check.diagnostic = "position " + std::to_string(i + 1) + ": " + std::move(why);
    return check;
  };
  if (limits.size() != L) return fail(0, "expected one limit per cycle position");
  for (std::size_t i = 0; i < L; ++i) {
    if (limits[i].scope() != model.scope(cycle.order[i])) {
      return fail(i, "scope does not match conditional " + std::to_string(cycle.order[i] + 1));
    }
  }
  for (std::size_t i = 0; i < L; ++i) {
    const std::size_t next = (i + 1) % L;
    const auto& f = conditional_at(model, cycle, next);
    try {
      const double step_gap =
          max_parameter_difference(gaussian_replacement(limits[i], f), limits[next]);
      if (step_gap > kParameterTolerance) {
        std::ostringstream os;
        os << "replacement lands " << step_gap << " away from position " << next + 1;
        return fail(i, os.str());
      }
      const double marginal_gap =
          max_parameter_difference(gaussian_marginal(limits[i], f.parents()),
                                   gaussian_marginal(limits[next], f.parents()));
      if (marginal_gap > kParameterTolerance) {
        std::ostringstream os;
        os << "shared " << to_string(f.parents()) << "-marginal differs by " << marginal_gap;
        return fail(i, os.str());
      }
    } catch (const Error& e) {
      return fail(i, e.what());
    }
  }
  return check;
}

GaussianCompatibilityResult gaussian_compatibility_check(const ConditionalModel& model,
                                                         const UpdatingCycle& cycle,
                                                         const GaussianIcrConfig& cfg,
                                                         double tol) {
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (!model.is_full(i)) {
      throw Error(ErrorCode::NotAllFull,
                  "conditional " + std::to_string(i + 1) + " is not a full conditional");
    }
  }
  GaussianCompatibilityResult result{Compatibility::Undecidable, 0.0,
                                     gaussian_icr_run(model, cycle, cfg)};
  const auto& limits = result.report.stationary;
  for (std::size_t i = 0; i < limits.size(); ++i) {
    for (std::size_t j = i + 1; j < limits.size(); ++j) {
      result.max_pairwise_difference = std::max(
          result.max_pairwise_difference, max_parameter_difference(limits[i], limits[j]));
    }
  }
  if (result.report.converged()) {
    result.verdict = result.max_pairwise_difference <= tol ? Compatibility::Compatible
                                                           : Compatibility::Incompatible;
    result.report.compatible = result.verdict == Compatibility::Compatible;
  }
  return result;
}

std::optional<std::string> rational_approximation(double x) {
  if (!std::isfinite(x)) return std::nullopt;
  for (long q = 1; q <= 512; ++q) {
    const double p = std::round(x * double(q));
    if (std::abs(x - p / double(q)) <= 1e-9) {
      const auto num = static_cast<long long>(p);
      if (q == 1) return std::to_string(num);
      return std::to_string(num) + "/" + std::to_string(q);
    }
  }
  return std::nullopt;
}

void write_trace_csv(const GaussianIcrReport& report, std::ostream& out) {
  out << "cycle_index,position,kl_gap,frob_gap\n";
  out << std::setprecision(17);
  for (const auto& row : report.rows) {
    out << row.cycle + 1 << ',' << row.position + 1 << ',' << row.kl_gap << ',' << row.frob_gap
        << '\n';
  }
}

}  // namespace icr
