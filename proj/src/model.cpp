#include "icr/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "numeric.hpp"
#include "tensor_index.hpp"

namespace icr {

namespace {

constexpr double kSumTolerance = 1e-12;

void check_normalized(std::span<const double> values, const char* what) {
  double sum = 0.0;
  for (double v : values) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::InvalidDistribution,
                  std::string(what) + " has a negative or non-finite entry");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    std::ostringstream os;
    os << what << " sums to " << sum << ", not 1";
    throw Error(ErrorCode::InvalidDistribution, os.str());
  }
}

void require_same_support(const DiscreteDistribution& q,
                          const DiscreteDistribution& h) {
  if (q.scope() != h.scope() || q.dims() != h.dims()) {
    throw Error(ErrorCode::ScopeMismatch,
                "distributions live on " + to_string(q.scope()) + " and " +
                    to_string(h.scope()));
  }
}

Eigen::VectorXd sub_vector(const Eigen::VectorXd& v,
                           const std::vector<std::size_t>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = v(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

}  // namespace

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidDistribution: return "InvalidDistribution";
    case ErrorCode::NotSubset: return "NotSubset";
    case ErrorCode::ScopeMismatch: return "ScopeMismatch";
    case ErrorCode::SupportViolation: return "SupportViolation";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::ZeroMarginal: return "ZeroMarginal";
    case ErrorCode::InvalidModel: return "InvalidModel";
    case ErrorCode::NotAPermutation: return "NotAPermutation";
    case ErrorCode::TooManyConditionals: return "TooManyConditionals";
    case ErrorCode::NotPermissibleStep: return "NotPermissibleStep";
    case ErrorCode::NotPermissible: return "NotPermissible";
    case ErrorCode::StateSpaceTooLarge: return "StateSpaceTooLarge";
    case ErrorCode::NonUniqueFixedPoint: return "NonUniqueFixedPoint";
    case ErrorCode::NotAllFull: return "NotAllFull";
    case ErrorCode::InconsistentMargins: return "InconsistentMargins";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

// ---------------------------------------------------------------------------
// VarSet

VarSet::VarSet(std::initializer_list<VarIndex> members)
    : VarSet(std::vector<VarIndex>(members)) {}

VarSet::VarSet(std::vector<VarIndex> members) : members_(std::move(members)) {
  std::sort(members_.begin(), members_.end());
  if (std::adjacent_find(members_.begin(), members_.end()) != members_.end()) {
    throw Error(ErrorCode::InvalidArgument, "duplicate variable in set");
  }
}

VarSet VarSet::range(std::size_t d) {
  std::vector<VarIndex> all(d);
  for (std::size_t i = 0; i < d; ++i) all[i] = i;
  return VarSet(std::move(all));
}

bool VarSet::contains(VarIndex v) const {
  return std::binary_search(members_.begin(), members_.end(), v);
}

std::size_t VarSet::position(VarIndex v) const {
  auto it = std::lower_bound(members_.begin(), members_.end(), v);
  if (it == members_.end() || *it != v) {
    throw Error(ErrorCode::NotSubset, "variable " + std::to_string(v + 1) +
                                          " not in " + to_string(*this));
  }
  return static_cast<std::size_t>(it - members_.begin());
}

bool VarSet::is_subset_of(const VarSet& other) const {
  return std::includes(other.members_.begin(), other.members_.end(),
                       members_.begin(), members_.end());
}

bool VarSet::is_proper_subset_of(const VarSet& other) const {
  return size() < other.size() && is_subset_of(other);
}

bool VarSet::disjoint_from(const VarSet& other) const {
  return intersected(other).empty();
}

VarSet VarSet::united(const VarSet& other) const {
  std::vector<VarIndex> out;
  std::set_union(members_.begin(), members_.end(), other.members_.begin(),
                 other.members_.end(), std::back_inserter(out));
  return VarSet(std::move(out));
}

VarSet VarSet::minus(const VarSet& other) const {
  std::vector<VarIndex> out;
  std::set_difference(members_.begin(), members_.end(), other.members_.begin(),
                      other.members_.end(), std::back_inserter(out));
  return VarSet(std::move(out));
}

VarSet VarSet::intersected(const VarSet& other) const {
  std::vector<VarIndex> out;
  std::set_intersection(members_.begin(), members_.end(),
                        other.members_.begin(), other.members_.end(),
                        std::back_inserter(out));
  return VarSet(std::move(out));
}

std::string to_string(const VarSet& set) {
  std::string out = "{";
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(set[i] + 1);
  }
  return out + "}";
}

// ---------------------------------------------------------------------------
// Discrete

DiscreteDistribution::DiscreteDistribution(VarSet scope,
                                           std::vector<std::size_t> dims,
                                           std::vector<double> table)
    : scope_(std::move(scope)), dims_(std::move(dims)), table_(std::move(table)) {
  if (dims_.size() != scope_.size()) {
    throw Error(ErrorCode::InvalidDistribution,
                "dims length differs from scope size");
  }
  if (detail::product(dims_) != table_.size()) {
    throw Error(ErrorCode::InvalidDistribution,
                "table size does not match the product of dims");
  }
  check_normalized(table_, "distribution");
}

DiscreteDistribution DiscreteDistribution::uniform(VarSet scope,
                                                   std::vector<std::size_t> dims) {
  const std::size_t n = detail::product(dims);
  return DiscreteDistribution(std::move(scope), std::move(dims),
                              std::vector<double>(n, 1.0 / double(n)));
}

DiscreteConditional::DiscreteConditional(VarSet target,
                                         std::vector<std::size_t> target_dims,
                                         VarSet parents,
                                         std::vector<std::size_t> parent_dims,
                                         std::vector<double> table)
    : target_(std::move(target)),
      parents_(std::move(parents)),
      target_dims_(std::move(target_dims)),
      parent_dims_(std::move(parent_dims)),
      table_(std::move(table)) {
  if (target_.empty()) {
    throw Error(ErrorCode::InvalidModel, "conditional with empty target");
  }
  if (!target_.disjoint_from(parents_)) {
    throw Error(ErrorCode::InvalidModel, "target and parents overlap");
  }
  if (target_dims_.size() != target_.size() ||
      parent_dims_.size() != parents_.size()) {
    throw Error(ErrorCode::InvalidModel, "dims do not match conditional sets");
  }
  target_configs_ = detail::product(target_dims_);
  parent_configs_ = detail::product(parent_dims_);
  if (table_.size() != target_configs_ * parent_configs_) {
    throw Error(ErrorCode::InvalidModel,
                "conditional table has " + std::to_string(table_.size()) +
                    " entries, expected " +
                    std::to_string(target_configs_ * parent_configs_));
  }
  for (std::size_t p = 0; p < parent_configs_; ++p) {
    check_normalized(slice(p), "conditional slice");
  }
}

// ---------------------------------------------------------------------------
// Gaussian

bool is_positive_definite(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if (!m.allFinite()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  return ev.maxCoeff() > 0.0 && ev.minCoeff() > 1e-10 * ev.maxCoeff();
}

GaussianDistribution::GaussianDistribution(VarSet scope, Eigen::VectorXd mean,
                                           Eigen::MatrixXd covariance)
    : scope_(std::move(scope)), mean_(std::move(mean)), cov_(std::move(covariance)) {
  const auto k = static_cast<Eigen::Index>(scope_.size());
  if (mean_.size() != k || cov_.rows() != k || cov_.cols() != k) {
    throw Error(ErrorCode::InvalidDistribution,
                "mean/covariance shape does not match scope " + to_string(scope_));
  }
  if (!mean_.allFinite()) {
    throw Error(ErrorCode::InvalidDistribution, "non-finite mean");
  }
  if (!is_positive_definite(cov_)) {
    throw Error(ErrorCode::NotPositiveDefinite,
                "covariance on " + to_string(scope_) +
                    " is not symmetric positive definite");
  }
}

GaussianDistribution GaussianDistribution::standard(VarSet scope) {
  const auto k = static_cast<Eigen::Index>(scope.size());
  return GaussianDistribution(std::move(scope), Eigen::VectorXd::Zero(k),
                              Eigen::MatrixXd::Identity(k, k));
}

GaussianConditional::GaussianConditional(VarSet target, VarSet parents,
                                         Eigen::MatrixXd coef,
                                         Eigen::VectorXd intercept,
                                         Eigen::MatrixXd cond_cov)
    : target_(std::move(target)),
      parents_(std::move(parents)),
      coef_(std::move(coef)),
      intercept_(std::move(intercept)),
      cond_cov_(std::move(cond_cov)) {
  if (target_.empty()) {
    throw Error(ErrorCode::InvalidModel, "conditional with empty target");
  }
  if (!target_.disjoint_from(parents_)) {
    throw Error(ErrorCode::InvalidModel, "target and parents overlap");
  }
  const auto a = static_cast<Eigen::Index>(target_.size());
  const auto b = static_cast<Eigen::Index>(parents_.size());
  if (coef_.rows() != a || coef_.cols() != b) {
    throw Error(ErrorCode::InvalidModel, "coef must be |target| x |parents|");
  }
  if (intercept_.size() != a) {
    throw Error(ErrorCode::InvalidModel, "intercept must have |target| entries");
  }
  if (cond_cov_.rows() != a || cond_cov_.cols() != a) {
    throw Error(ErrorCode::InvalidModel, "cond_cov must be |target| x |target|");
  }
  if (!is_positive_definite(cond_cov_)) {
    throw Error(ErrorCode::NotPositiveDefinite,
                "conditional covariance of " + to_string(target_) +
                    " is not positive definite");
  }
}

// ---------------------------------------------------------------------------
// ConditionalModel

ConditionalModel::ConditionalModel(std::vector<VariableSpec> variables,
                                   std::vector<DiscreteConditional> conditionals)
    : variables_(std::move(variables)), conditionals_(std::move(conditionals)) {
  validate_variables(VariableSpec::Kind::Discrete);
  for (const auto& c : discrete()) {
    targets_.push_back(c.target());
    parents_.push_back(c.parents());
  }
  for (std::size_t i = 0; i < size(); ++i) {
    const auto& c = discrete()[i];
    for (const auto& [set, dims] :
         {std::pair{&c.target(), &c.target_dims()},
          std::pair{&c.parents(), &c.parent_dims()}}) {
      for (std::size_t k = 0; k < set->size(); ++k) {
        if ((*set)[k] >= dimension()) {
          throw Error(ErrorCode::InvalidModel,
                      "conditional " + std::to_string(i + 1) +
                          " references an undeclared variable");
        }
        if ((*dims)[k] != variables_[(*set)[k]].support_size) {
          throw Error(ErrorCode::InvalidModel,
                      "conditional " + std::to_string(i + 1) +
                          " disagrees with the support size of " +
                          variables_[(*set)[k]].name);
        }
      }
    }
  }
  if (size() < 2) {
    throw Error(ErrorCode::InvalidModel, "a model needs at least 2 conditionals");
  }
}

ConditionalModel::ConditionalModel(std::vector<VariableSpec> variables,
                                   std::vector<GaussianConditional> conditionals)
    : variables_(std::move(variables)), conditionals_(std::move(conditionals)) {
  validate_variables(VariableSpec::Kind::Continuous);
  for (const auto& c : gaussian()) {
    targets_.push_back(c.target());
    parents_.push_back(c.parents());
    const auto scope = c.scope();
    if (!scope.empty() && scope.members().back() >= dimension()) {
      throw Error(ErrorCode::InvalidModel,
                  "conditional " + std::to_string(targets_.size()) +
                      " references an undeclared variable");
    }
  }
  if (size() < 2) {
    throw Error(ErrorCode::InvalidModel, "a model needs at least 2 conditionals");
  }
}

void ConditionalModel::validate_variables(VariableSpec::Kind expected) const {
  std::set<std::string> names;
  for (const auto& v : variables_) {
    if (v.name.empty() || !names.insert(v.name).second) {
      throw Error(ErrorCode::InvalidModel,
                  "variable names must be unique and non-empty: '" + v.name + "'");
    }
    if (v.kind != expected) {
      throw Error(ErrorCode::InvalidModel,
                  "variable " + v.name +
                      " does not match the model family (mixed models are not supported)");
    }
    if (v.kind == VariableSpec::Kind::Discrete && v.support_size < 2) {
      throw Error(ErrorCode::InvalidModel,
                  "discrete variable " + v.name + " needs support_size >= 2");
    }
  }
}

std::vector<std::size_t> ConditionalModel::dims_of(const VarSet& set) const {
  std::vector<std::size_t> dims;
  dims.reserve(set.size());
  for (VarIndex v : set) dims.push_back(variables_.at(v).support_size);
  return dims;
}

const std::vector<DiscreteConditional>& ConditionalModel::discrete() const {
  if (const auto* d = std::get_if<0>(&conditionals_)) return *d;
  throw Error(ErrorCode::InvalidModel, "model is not discrete");
}

const std::vector<GaussianConditional>& ConditionalModel::gaussian() const {
  if (const auto* g = std::get_if<1>(&conditionals_)) return *g;
  throw Error(ErrorCode::InvalidModel, "model is not Gaussian");
}

// ---------------------------------------------------------------------------
// Operations

DiscreteDistribution marginalize(const DiscreteDistribution& h, const VarSet& u) {
  if (!u.is_subset_of(h.scope())) {
    throw Error(ErrorCode::NotSubset,
                to_string(u) + " is not a subset of " + to_string(h.scope()));
  }
  std::vector<std::size_t> out_dims;
  for (VarIndex v : u) out_dims.push_back(h.dim_of(v));
  std::vector<double> out(detail::product(out_dims), 0.0);

  detail::Odometer cell(h.dims(), {detail::embed_strides(h.scope(), u, out_dims)});
  std::size_t i = 0;
  do {
    out[cell.offset(0)] += h[i++];
  } while (cell.next());
  return DiscreteDistribution(u, std::move(out_dims), std::move(out));
}

double kl_divergence(const DiscreteDistribution& q, const DiscreteDistribution& h) {
  require_same_support(q, h);
  // Each term is q(r - log1p r) with r = h/q - 1; for normalized inputs the
  // terms sum to sum q log(q/h) and each one is non-negative.
  double kl = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double qi = q[i];
    const double hi = h[i];
    if (qi == 0.0) {
      kl += hi;
      continue;
    }
    if (hi == 0.0) {
      throw Error(ErrorCode::SupportViolation,
                  "q has mass at cell " + std::to_string(i) + " where h is zero");
    }
    kl += qi * detail::excess_log1p((hi - qi) / qi);
  }
  return kl;
}

double total_variation(const DiscreteDistribution& q,
                       const DiscreteDistribution& h) {
  require_same_support(q, h);
  double sum = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) sum += std::abs(q[i] - h[i]);
  return 0.5 * sum;
}

double gaussian_kl(const GaussianDistribution& q, const GaussianDistribution& h) {
  if (q.scope() != h.scope()) {
    throw Error(ErrorCode::ScopeMismatch,
                to_string(q.scope()) + " vs " + to_string(h.scope()));
  }
  if (q.mean() == h.mean() && q.covariance() == h.covariance()) return 0.0;
  Eigen::LLT<Eigen::MatrixXd> h_chol(h.covariance());
  if (h_chol.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularCovariance, "covariance of h is singular");
  }
  // Generalized eigenvalues l of (Sigma_q, Sigma_h):
  // tr(Sh^-1 Sq) - k - log det(Sh^-1 Sq) = sum (l - 1 - log l).
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(
      q.covariance(), h.covariance(), Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularCovariance, "generalized eigen solve failed");
  }
  double spread = 0.0;
  for (double l : eig.eigenvalues()) {
    if (!(l > 0.0)) {
      throw Error(ErrorCode::SingularCovariance, "covariance of q is singular");
    }
    spread += detail::excess_log1p(l - 1.0);
  }
  const Eigen::VectorXd diff = h.mean() - q.mean();
  const double mahalanobis = diff.dot(h_chol.solve(diff));
  return 0.5 * (spread + mahalanobis);
}

GaussianDistribution gaussian_marginal(const GaussianDistribution& h,
                                       const VarSet& u) {
  if (!u.is_subset_of(h.scope())) {
    throw Error(ErrorCode::NotSubset,
                to_string(u) + " is not a subset of " + to_string(h.scope()));
  }
  std::vector<std::size_t> idx;
  for (VarIndex v : u) idx.push_back(h.scope().position(v));
  Eigen::MatrixXd cov(idx.size(), idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (std::size_t c = 0; c < idx.size(); ++c) {
      cov(Eigen::Index(r), Eigen::Index(c)) =
          h.covariance()(Eigen::Index(idx[r]), Eigen::Index(idx[c]));
    }
  }
  return GaussianDistribution(u, sub_vector(h.mean(), idx), std::move(cov));
}

DiscreteConditional derive_conditional(const DiscreteDistribution& f,
                                       const VarSet& target,
                                       const VarSet& parents) {
  const VarSet scope = target.united(parents);
  const auto joint = marginalize(f, scope);
  const auto parent_marginal = marginalize(f, parents);
  std::vector<std::size_t> target_dims;
  for (VarIndex v : target) target_dims.push_back(f.dim_of(v));
  const std::size_t n_target = detail::product(target_dims);

  for (std::size_t p = 0; p < parent_marginal.size(); ++p) {
    if (parent_marginal[p] <= 0.0) {
      throw Error(ErrorCode::ZeroMarginal,
                  "parent configuration " + std::to_string(p) + " of " +
                      to_string(parents) + " has probability zero");
    }
  }

  // Offset into the parent-major conditional table for each axis of scope.
  const auto target_strides = detail::embed_strides(scope, target, target_dims);
  auto parent_strides =
      detail::embed_strides(scope, parents, parent_marginal.dims());
  std::vector<std::size_t> table_strides(scope.size());
  for (std::size_t k = 0; k < scope.size(); ++k) {
    table_strides[k] = target_strides[k] + parent_strides[k] * n_target;
  }

  std::vector<double> table(joint.size());
  detail::Odometer cell(joint.dims(), {table_strides, parent_strides});
  std::size_t i = 0;
  do {
    table[cell.offset(0)] = joint[i++] / parent_marginal[cell.offset(1)];
  } while (cell.next());

  // Re-normalize each slice to absorb rounding in the division.
  for (std::size_t p = 0; p < parent_marginal.size(); ++p) {
    double s = 0.0;
    for (std::size_t t = 0; t < n_target; ++t) s += table[p * n_target + t];
    for (std::size_t t = 0; t < n_target; ++t) table[p * n_target + t] /= s;
  }
  return DiscreteConditional(target, std::move(target_dims), parents,
                             parent_marginal.dims(), std::move(table));
}

ConditionalModel derive_conditionals(const DiscreteDistribution& f,
                                     std::span<const Block> blocks,
                                     std::vector<std::string> names) {
  const std::size_t d = f.scope().size();
  if (f.scope() != VarSet::range(d)) {
    throw Error(ErrorCode::InvalidArgument,
                "derive_conditionals expects a joint over every variable");
  }
  if (names.empty()) {
    for (std::size_t i = 0; i < d; ++i) names.push_back("X" + std::to_string(i + 1));
  }
  if (names.size() != d) {
    throw Error(ErrorCode::InvalidArgument, "one name per variable required");
  }
  std::vector<VariableSpec> variables;
  for (std::size_t i = 0; i < d; ++i) {
    variables.push_back({names[i], VariableSpec::Kind::Discrete, f.dims()[i]});
  }
  std::vector<DiscreteConditional> conditionals;
  for (const auto& block : blocks) {
    if (!block.target.united(block.parents).is_subset_of(f.scope())) {
      throw Error(ErrorCode::NotSubset, "block outside the joint's scope");
    }
    conditionals.push_back(derive_conditional(f, block.target, block.parents));
  }
  return ConditionalModel(std::move(variables), std::move(conditionals));
}

DiscreteDistribution reassemble(const DiscreteConditional& conditional,
                                const DiscreteDistribution& parent_marginal) {
  if (parent_marginal.scope() != conditional.parents() ||
      parent_marginal.dims() != conditional.parent_dims()) {
    throw Error(ErrorCode::ScopeMismatch,
                "parent marginal does not match the conditional's parents");
  }
  const VarSet scope = conditional.scope();
  std::vector<std::size_t> dims;
  for (VarIndex v : scope) {
    dims.push_back(conditional.target().contains(v)
                       ? conditional.target_dims()[conditional.target().position(v)]
                       : conditional.parent_dims()[conditional.parents().position(v)]);
  }
  const auto target_strides =
      detail::embed_strides(scope, conditional.target(), conditional.target_dims());
  const auto parent_strides =
      detail::embed_strides(scope, conditional.parents(), conditional.parent_dims());

  std::vector<double> out(detail::product(dims));
  detail::Odometer cell(dims, {target_strides, parent_strides});
  std::size_t i = 0;
  do {
    out[i++] = conditional.prob(cell.offset(1), cell.offset(0)) *
               parent_marginal[cell.offset(1)];
  } while (cell.next());
  return DiscreteDistribution(scope, std::move(dims), std::move(out));
}

}  // namespace icr
