#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "icr/error.hpp"

namespace icr {

/// Zero-based position of a variable in the model's declaration list.
using VarIndex = std::size_t;

/// Sorted, duplicate-free set of variable indices. Every tensor in the
/// library is laid out row-major over its scope in this order.
class VarSet {
 public:
  VarSet() = default;
  VarSet(std::initializer_list<VarIndex> members);
  explicit VarSet(std::vector<VarIndex> members);

  /// {0, 1, ..., d-1}
  static VarSet range(std::size_t d);

  std::size_t size() const noexcept { return members_.size(); }
  bool empty() const noexcept { return members_.empty(); }
  VarIndex operator[](std::size_t i) const { return members_[i]; }
  auto begin() const noexcept { return members_.begin(); }
  auto end() const noexcept { return members_.end(); }
  const std::vector<VarIndex>& members() const noexcept { return members_; }

  bool contains(VarIndex v) const;
  /// Position of `v` inside the set; throws NotSubset when absent.
  std::size_t position(VarIndex v) const;
  bool is_subset_of(const VarSet& other) const;
  bool is_proper_subset_of(const VarSet& other) const;
  bool disjoint_from(const VarSet& other) const;

  VarSet united(const VarSet& other) const;
  VarSet minus(const VarSet& other) const;
  VarSet intersected(const VarSet& other) const;

  friend bool operator==(const VarSet&, const VarSet&) = default;

 private:
  std::vector<VarIndex> members_;
};

/// "{1,3}" using one-based indices.
std::string to_string(const VarSet& set);

struct VariableSpec {
  enum class Kind { Discrete, Continuous };

  std::string name;
  Kind kind = Kind::Discrete;
  std::size_t support_size = 0;  // discrete only
};

// ---------------------------------------------------------------------------
// Discrete representations

class DiscreteDistribution {
 public:
  /// `dims[k]` is the support size of `scope[k]`. Entries must be
  /// non-negative and sum to one within 1e-12.
  DiscreteDistribution(VarSet scope, std::vector<std::size_t> dims,
                       std::vector<double> table);

  static DiscreteDistribution uniform(VarSet scope,
                                      std::vector<std::size_t> dims);

  const VarSet& scope() const noexcept { return scope_; }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::span<const double> table() const noexcept { return table_; }
  std::size_t size() const noexcept { return table_.size(); }
  double operator[](std::size_t i) const { return table_[i]; }
  std::size_t dim_of(VarIndex v) const { return dims_[scope_.position(v)]; }

 private:
  VarSet scope_;
  std::vector<std::size_t> dims_;
  std::vector<double> table_;
};

/// f_{a|b}. The table is parent-major: row p (a parent configuration in
/// row-major order over `parents`) holds a distribution over `target`.
class DiscreteConditional {
 public:
  DiscreteConditional(VarSet target, std::vector<std::size_t> target_dims,
                      VarSet parents, std::vector<std::size_t> parent_dims,
                      std::vector<double> table);

  const VarSet& target() const noexcept { return target_; }
  const VarSet& parents() const noexcept { return parents_; }
  VarSet scope() const { return target_.united(parents_); }
  const std::vector<std::size_t>& target_dims() const noexcept {
    return target_dims_;
  }
  const std::vector<std::size_t>& parent_dims() const noexcept {
    return parent_dims_;
  }
  std::size_t target_configs() const noexcept { return target_configs_; }
  std::size_t parent_configs() const noexcept { return parent_configs_; }

  double prob(std::size_t parent_cfg, std::size_t target_cfg) const {
    return table_[parent_cfg * target_configs_ + target_cfg];
  }
  std::span<const double> slice(std::size_t parent_cfg) const {
    return std::span<const double>(table_).subspan(
        parent_cfg * target_configs_, target_configs_);
  }
  std::span<const double> table() const noexcept { return table_; }

 private:
  VarSet target_;
  VarSet parents_;
  std::vector<std::size_t> target_dims_;
  std::vector<std::size_t> parent_dims_;
  std::size_t target_configs_ = 1;
  std::size_t parent_configs_ = 1;
  std::vector<double> table_;
};

// ---------------------------------------------------------------------------
// Gaussian representations

/// True when `m` is symmetric within 1e-12 and its smallest eigenvalue
/// exceeds 1e-10 times its largest.
bool is_positive_definite(const Eigen::MatrixXd& m);

class GaussianDistribution {
 public:
  GaussianDistribution(VarSet scope, Eigen::VectorXd mean,
                       Eigen::MatrixXd covariance);

  static GaussianDistribution standard(VarSet scope);

  const VarSet& scope() const noexcept { return scope_; }
  const Eigen::VectorXd& mean() const noexcept { return mean_; }
  const Eigen::MatrixXd& covariance() const noexcept { return cov_; }

 private:
  VarSet scope_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
};

/// X_a | X_b ~ N(coef * x_b + intercept, cond_cov). Rows of `coef` follow
/// the sorted target order, columns the sorted parent order.
class GaussianConditional {
 public:
  GaussianConditional(VarSet target, VarSet parents, Eigen::MatrixXd coef,
                      Eigen::VectorXd intercept, Eigen::MatrixXd cond_cov);

  const VarSet& target() const noexcept { return target_; }
  const VarSet& parents() const noexcept { return parents_; }
  VarSet scope() const { return target_.united(parents_); }
  const Eigen::MatrixXd& coef() const noexcept { return coef_; }
  const Eigen::VectorXd& intercept() const noexcept { return intercept_; }
  const Eigen::MatrixXd& cond_cov() const noexcept { return cond_cov_; }

 private:
  VarSet target_;
  VarSet parents_;
  Eigen::MatrixXd coef_;
  Eigen::VectorXd intercept_;
  Eigen::MatrixXd cond_cov_;
};

// ---------------------------------------------------------------------------

enum class Family { Discrete, Gaussian };

/// {f_{a_i|b_i}: 1 <= i <= L} together with the variable declarations.
class ConditionalModel {
 public:
  ConditionalModel(std::vector<VariableSpec> variables,
                   std::vector<DiscreteConditional> conditionals);
  ConditionalModel(std::vector<VariableSpec> variables,
                   std::vector<GaussianConditional> conditionals);

  Family family() const noexcept {
    return conditionals_.index() == 0 ? Family::Discrete : Family::Gaussian;
  }
  const std::vector<VariableSpec>& variables() const noexcept {
    return variables_;
  }
  std::size_t dimension() const noexcept { return variables_.size(); }
  std::size_t size() const noexcept { return targets_.size(); }
  VarSet all_variables() const { return VarSet::range(dimension()); }

  const VarSet& target(std::size_t i) const { return targets_.at(i); }
  const VarSet& parents(std::size_t i) const { return parents_.at(i); }
  VarSet scope(std::size_t i) const { return target(i).united(parents(i)); }
  bool is_full(std::size_t i) const { return scope(i).size() == dimension(); }

  /// Support sizes of `set` (discrete models only).
  std::vector<std::size_t> dims_of(const VarSet& set) const;

  const std::vector<DiscreteConditional>& discrete() const;
  const std::vector<GaussianConditional>& gaussian() const;

 private:
  void validate_variables(VariableSpec::Kind expected) const;

  std::vector<VariableSpec> variables_;
  std::variant<std::vector<DiscreteConditional>,
               std::vector<GaussianConditional>>
      conditionals_;
  std::vector<VarSet> targets_;
  std::vector<VarSet> parents_;
};

// ---------------------------------------------------------------------------
// Operations

/// Sums `h` over scope \ u.
DiscreteDistribution marginalize(const DiscreteDistribution& h,
                                 const VarSet& u);

/// Sum q log(q/h) with 0 log 0 = 0. Throws SupportViolation when q puts
/// mass where h does not.
double kl_divergence(const DiscreteDistribution& q,
                     const DiscreteDistribution& h);

double total_variation(const DiscreteDistribution& q,
                       const DiscreteDistribution& h);

/// KL(q || h) between two Gaussians on the same scope.
double gaussian_kl(const GaussianDistribution& q,
                   const GaussianDistribution& h);

/// Gaussian marginal over u (sub-blocks of mean and covariance).
GaussianDistribution gaussian_marginal(const GaussianDistribution& h,
                                       const VarSet& u);

/// f_{a|b} = f_{a u b} / f_b.
DiscreteConditional derive_conditional(const DiscreteDistribution& f,
                                       const VarSet& target,
                                       const VarSet& parents);

struct Block {
  VarSet target;
  VarSet parents;
};

/// Compatible model built from a joint over {0..d-1}. Variables are named
/// X1..Xd unless `names` is given.
ConditionalModel derive_conditionals(const DiscreteDistribution& f,
                                     std::span<const Block> blocks,
                                     std::vector<std::string> names = {});

/// Product f_{a|b} * f_b on scope a u b. Inverse of derive_conditional.
DiscreteDistribution reassemble(const DiscreteConditional& conditional,
                                const DiscreteDistribution& parent_marginal);

}  // namespace icr
