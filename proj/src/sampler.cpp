#include "icr/sampler.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include "tensor_index.hpp"

namespace icr {

namespace {

constexpr double kMaxZ = 4.0;

using Rng = std::mt19937_64;

Rng make_rng(std::uint64_t seed) {
  const std::uint64_t s = derive_seed(seed, 0);
  std::seed_seq seq{std::uint32_t(s), std::uint32_t(s >> 32)};
  return Rng(seq);
}

/// Sufficient statistics of one position, split into batches.
struct Accumulator {
  std::size_t dim = 0;
  std::vector<std::size_t> counts;   // per batch
  std::vector<double> sums;          // batch * dim
  std::vector<double> cross;         // batch * dim * dim (Gaussian)
  std::vector<double> cells;         // batch * cells (discrete)
  std::size_t n_cells = 0;
};

std::size_t batch_of(std::size_t sample, const ChainConfig& cfg) {
  const std::size_t b = sample * cfg.batches / cfg.samples;
  return std::min(b, cfg.batches - 1);
}

double sample_sd(const std::vector<double>& values, double mean) {
  if (values.size() < 2) return 0.0;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / double(values.size() - 1));
}

// ---------------------------------------------------------------------------
// Gaussian chain

struct GaussianStep {
  std::vector<std::size_t> target;
  std::vector<std::size_t> parents;
  Eigen::MatrixXd coef;
  Eigen::VectorXd intercept;
  Eigen::MatrixXd chol;  // lower factor of cond_cov
};

std::vector<BatchSummary> gaussian_chain(const ConditionalModel& model,
                                         const UpdatingCycle& cycle,
                                         const ChainConfig& cfg) {
  const std::size_t L = cycle.order.size();
  std::vector<GaussianStep> steps;
  std::vector<std::vector<std::size_t>> scopes;
  for (std::size_t pos = 0; pos < L; ++pos) {
    const auto& f = model.gaussian()[cycle.order[pos]];
    steps.push_back({f.target().members(), f.parents().members(), f.coef(), f.intercept(),
                     Eigen::LLT<Eigen::MatrixXd>(f.cond_cov()).matrixL()});
    scopes.push_back(f.scope().members());
  }

  std::vector<Accumulator> acc(L);
  for (std::size_t pos = 0; pos < L; ++pos) {
    const std::size_t k = scopes[pos].size();
    acc[pos].dim = k;
    acc[pos].counts.assign(cfg.batches, 0);
    acc[pos].sums.assign(cfg.batches * k, 0.0);
    acc[pos].cross.assign(cfg.batches * k * k, 0.0);
  }

  Rng rng = make_rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(model.dimension(), 0.0);
  std::vector<double> z, mean;

  const std::size_t total_cycles = cfg.burn_in + cfg.samples * cfg.thin;
  std::size_t recorded = 0;
  for (std::size_t cyc = 0; cyc < total_cycles; ++cyc) {
    const bool record =
        cyc >= cfg.burn_in && (cyc - cfg.burn_in) % cfg.thin == 0;
    for (std::size_t pos = 0; pos < L; ++pos) {
      const auto& s = steps[pos];
      const std::size_t na = s.target.size();
      mean.assign(na, 0.0);
      z.resize(na);
      for (std::size_t j = 0; j < na; ++j) {
        double m = s.intercept(Eigen::Index(j));
        for (std::size_t p = 0; p < s.parents.size(); ++p) {
          m += s.coef(Eigen::Index(j), Eigen::Index(p)) * x[s.parents[p]];
        }
        mean[j] = m;
        z[j] = normal(rng);
      }
      for (std::size_t j = 0; j < na; ++j) {
        double v = mean[j];
        for (std::size_t m = 0; m <= j; ++m) v += s.chol(Eigen::Index(j), Eigen::Index(m)) * z[m];
        x[s.target[j]] = v;
      }
      if (!record) continue;
      auto& a = acc[pos];
      const std::size_t b = batch_of(recorded, cfg);
      const auto& sc = scopes[pos];
      const std::size_t k = a.dim;
      ++a.counts[b];
      double* sums = &a.sums[b * k];
      double* cross = &a.cross[b * k * k];
      for (std::size_t r = 0; r < k; ++r) {
        const double xr = x[sc[r]];
        sums[r] += xr;
        for (std::size_t c = 0; c < k; ++c) cross[r * k + c] += xr * x[sc[c]];
      }
    }
    if (record) ++recorded;
  }

  std::vector<BatchSummary> out;
  for (std::size_t pos = 0; pos < L; ++pos) {
    const auto& a = acc[pos];
    const auto k = Eigen::Index(a.dim);
    BatchSummary s;
    s.position = pos;
    s.scope = VarSet(scopes[pos]);
    s.family = Family::Gaussian;
    s.count = recorded;

    Eigen::VectorXd total_sum = Eigen::VectorXd::Zero(k);
    Eigen::MatrixXd total_cross = Eigen::MatrixXd::Zero(k, k);
    for (std::size_t b = 0; b < cfg.batches; ++b) {
      total_sum += Eigen::Map<const Eigen::VectorXd>(&a.sums[b * a.dim], k);
      total_cross +=
          Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
              &a.cross[b * a.dim * a.dim], k, k);
    }
    const double n = double(recorded);
    s.empirical_mean = total_sum / n;
    s.empirical_cov = total_cross / n - s.empirical_mean * s.empirical_mean.transpose();

    // Batch means, each batch centered at the overall mean.
    const auto& m = s.empirical_mean;
    std::vector<std::vector<double>> mean_batches(static_cast<std::size_t>(k));
    std::vector<std::vector<double>> cov_batches(static_cast<std::size_t>(k * k));
    for (std::size_t b = 0; b < cfg.batches; ++b) {
      const double nb = double(a.counts[b]);
      if (nb == 0) continue;
      const Eigen::Map<const Eigen::VectorXd> s1(&a.sums[b * a.dim], k);
      const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
          s2(&a.cross[b * a.dim * a.dim], k, k);
      const Eigen::MatrixXd centered =
          (s2 - m * s1.transpose() - s1 * m.transpose()) / nb + m * m.transpose();
      for (Eigen::Index r = 0; r < k; ++r) {
        mean_batches[std::size_t(r)].push_back(s1(r) / nb);
        for (Eigen::Index c = 0; c < k; ++c) {
          cov_batches[std::size_t(r * k + c)].push_back(centered(r, c));
        }
      }
    }
    const double root_b = std::sqrt(double(mean_batches[0].size()));
    s.mean_se.resize(k);
    s.cov_se.resize(k, k);
    for (Eigen::Index r = 0; r < k; ++r) {
      s.mean_se(r) = sample_sd(mean_batches[std::size_t(r)], m(r)) / root_b;
      for (Eigen::Index c = 0; c < k; ++c) {
        s.cov_se(r, c) =
            sample_sd(cov_batches[std::size_t(r * k + c)], s.empirical_cov(r, c)) / root_b;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Discrete chain

struct DiscreteStep {
  std::vector<std::size_t> target;
  std::vector<std::size_t> target_dims;
  std::vector<std::size_t> parents;
  std::vector<std::size_t> parent_dims;
  std::size_t n_target;
  std::vector<double> cumulative;  // parent-major running sums
};

std::vector<BatchSummary> discrete_chain(const ConditionalModel& model,
                                         const UpdatingCycle& cycle,
                                         const ChainConfig& cfg) {
  const std::size_t L = cycle.order.size();
  std::vector<DiscreteStep> steps;
  std::vector<VarSet> scopes;
  std::vector<std::vector<std::size_t>> scope_dims;
  std::vector<Accumulator> acc(L);
  for (std::size_t pos = 0; pos < L; ++pos) {
    const auto& f = model.discrete()[cycle.order[pos]];
    DiscreteStep s{f.target().members(), f.target_dims(), f.parents().members(),
                   f.parent_dims(), f.target_configs(), {}};
    s.cumulative.resize(f.table().size());
    for (std::size_t p = 0; p < f.parent_configs(); ++p) {
      double run = 0.0;
      for (std::size_t t = 0; t < f.target_configs(); ++t) {
        run += f.prob(p, t);
        s.cumulative[p * f.target_configs() + t] = run;
      }
    }
    steps.push_back(std::move(s));
    scopes.push_back(f.scope());
    scope_dims.push_back(model.dims_of(f.scope()));
    acc[pos].n_cells = detail::product(scope_dims.back());
    acc[pos].counts.assign(cfg.batches, 0);
    acc[pos].cells.assign(cfg.batches * acc[pos].n_cells, 0.0);
  }

  Rng rng = make_rng(cfg.seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<std::size_t> x(model.dimension(), 0);

  const std::size_t total_cycles = cfg.burn_in + cfg.samples * cfg.thin;
  std::size_t recorded = 0;
  for (std::size_t cyc = 0; cyc < total_cycles; ++cyc) {
    const bool record = cyc >= cfg.burn_in && (cyc - cfg.burn_in) % cfg.thin == 0;
    for (std::size_t pos = 0; pos < L; ++pos) {
      const auto& s = steps[pos];
      std::size_t p = 0;
      for (std::size_t k = 0; k < s.parents.size(); ++k) p = p * s.parent_dims[k] + x[s.parents[k]];
      const double* cum = &s.cumulative[p * s.n_target];
      const double u = uniform(rng) * cum[s.n_target - 1];
      std::size_t t = 0;
      while (t + 1 < s.n_target && cum[t] <= u) ++t;
      for (std::size_t k = s.target.size(); k-- > 0;) {
        x[s.target[k]] = t % s.target_dims[k];
        t /= s.target_dims[k];
      }
      if (!record) continue;
      auto& a = acc[pos];
      const std::size_t b = batch_of(recorded, cfg);
      std::size_t cell = 0;
      for (std::size_t k = 0; k < scopes[pos].size(); ++k) {
        cell = cell * scope_dims[pos][k] + x[scopes[pos][k]];
      }
      ++a.counts[b];
      a.cells[b * a.n_cells + cell] += 1.0;
    }
    if (record) ++recorded;
  }

  std::vector<BatchSummary> out;
  for (std::size_t pos = 0; pos < L; ++pos) {
    const auto& a = acc[pos];
    BatchSummary s;
    s.position = pos;
    s.scope = scopes[pos];
    s.family = Family::Discrete;
    s.count = recorded;
    std::vector<double> table(a.n_cells, 0.0);
    for (std::size_t b = 0; b < cfg.batches; ++b) {
      for (std::size_t c = 0; c < a.n_cells; ++c) table[c] += a.cells[b * a.n_cells + c];
    }
    for (double& v : table) v /= double(recorded);
    s.table_se.assign(a.n_cells, 0.0);
    for (std::size_t c = 0; c < a.n_cells; ++c) {
      std::vector<double> props;
      for (std::size_t b = 0; b < cfg.batches; ++b) {
        if (a.counts[b]) props.push_back(a.cells[b * a.n_cells + c] / double(a.counts[b]));
      }
      s.table_se[c] = sample_sd(props, table[c]) / std::sqrt(double(props.size()));
    }
    // Renormalize against accumulated rounding in the division above.
    double total = 0.0;
    for (double v : table) total += v;
    for (double& v : table) v /= total;
    s.empirical_table.emplace(scopes[pos], scope_dims[pos], std::move(table));
    out.push_back(std::move(s));
  }
  return out;
}

double z_score(double estimate, double se, double target) {
  const double diff = estimate - target;
  if (se > 0.0) return diff / se;
  return std::abs(diff) <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity();
}

void check_batch(const BatchSummary& batch) {
  if (batch.count == 0) {
    throw Error(ErrorCode::EmptySample, "batch at position " +
                                            std::to_string(batch.position) +
                                            " holds no samples");
  }
}

}  // namespace

void ChainConfig::validate() const {
  if (burn_in < 1 || samples < 1 || thin < 1 || batches < 2) {
    throw Error(ErrorCode::InvalidArgument,
                "burn_in, samples and thin must be positive, batches >= 2");
  }
  if (samples < batches) {
    throw Error(ErrorCode::InvalidArgument, "need at least one sample per batch");
  }
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<BatchSummary> run_chain(const ConditionalModel& model,
                                    const UpdatingCycle& cycle, const ChainConfig& cfg) {
  cfg.validate();
  require_permissible(cycle);
  return model.family() == Family::Gaussian ? gaussian_chain(model, cycle, cfg)
                                            : discrete_chain(model, cycle, cfg);
}

std::vector<std::vector<BatchSummary>> run_chains(const ConditionalModel& model,
                                                  const UpdatingCycle& cycle,
                                                  const ChainConfig& cfg,
                                                  std::size_t chains) {
  cfg.validate();
  require_permissible(cycle);
  std::vector<std::vector<BatchSummary>> results(chains);
  {
    std::vector<std::jthread> workers;
    for (std::size_t k = 0; k < chains; ++k) {
      workers.emplace_back([&, k] {
        ChainConfig own = cfg;
        own.seed = derive_seed(cfg.seed, k + 1);
        results[k] = run_chain(model, cycle, own);
      });
    }
  }
  return results;
}

Comparison compare(const BatchSummary& batch, const GaussianDistribution& limit) {
  check_batch(batch);
  if (batch.family != Family::Gaussian || batch.scope != limit.scope()) {
    throw Error(ErrorCode::ScopeMismatch,
                "batch on " + to_string(batch.scope) + " vs limit on " +
                    to_string(limit.scope()));
  }
  Comparison cmp;
  auto consider = [&](double z, const std::string& what) {
    z = std::abs(z);
    if (cmp.worst_entry.empty() || z > cmp.max_z) {
      cmp.max_z = z;
      cmp.worst_entry = what;
    }
  };
  const auto k = limit.mean().size();
  for (Eigen::Index r = 0; r < k; ++r) {
    consider(z_score(batch.empirical_mean(r), batch.mean_se(r), limit.mean()(r)),
             "mean[" + std::to_string(r) + "]");
    for (Eigen::Index c = r; c < k; ++c) {
      consider(z_score(batch.empirical_cov(r, c), batch.cov_se(r, c), limit.covariance()(r, c)),
               "cov[" + std::to_string(r) + "," + std::to_string(c) + "]");
    }
  }
  cmp.pass = cmp.max_z <= kMaxZ;
  return cmp;
}

Comparison compare(const BatchSummary& batch, const DiscreteDistribution& limit) {
  check_batch(batch);
  if (batch.family != Family::Discrete || !batch.empirical_table ||
      batch.scope != limit.scope() || batch.empirical_table->dims() != limit.dims()) {
    throw Error(ErrorCode::ScopeMismatch,
                "batch on " + to_string(batch.scope) + " vs limit on " +
                    to_string(limit.scope()));
  }
  Comparison cmp;
  for (std::size_t c = 0; c < limit.size(); ++c) {
    const double z = std::abs(z_score((*batch.empirical_table)[c], batch.table_se[c], limit[c]));
    if (z > cmp.max_z || cmp.worst_entry.empty()) {
      cmp.max_z = std::max(cmp.max_z, z);
      cmp.worst_entry = "cell[" + std::to_string(c) + "]";
    }
  }
  cmp.pass = cmp.max_z <= kMaxZ;
  return cmp;
}

}  // namespace icr
