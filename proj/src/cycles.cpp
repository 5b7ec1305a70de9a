#include "icr/cycles.hpp"

#include <algorithm>
#include <numeric>

namespace icr {

namespace {

constexpr std::size_t kMaxEnumerable = 9;

void require_permutation(std::span<const std::size_t> order, std::size_t L) {
  std::vector<bool> seen(L, false);
  if (order.size() != L) {
    throw Error(ErrorCode::NotAPermutation,
                "cycle has " + std::to_string(order.size()) + " entries, model has " +
                    std::to_string(L) + " conditionals");
  }
  for (std::size_t i : order) {
    if (i >= L || seen[i]) {
      throw Error(ErrorCode::NotAPermutation,
                  "cycle " + order_label(order) + " is not a permutation");
    }
    seen[i] = true;
  }
}

std::string names_of(const ConditionalModel& model, const VarSet& set) {
  std::string out;
  for (std::size_t k = 0; k < set.size(); ++k) {
    if (k) out += ",";
    out += model.variables()[set[k]].name;
  }
  return out;
}

}  // namespace

UpdatingCycle is_permissible(const ConditionalModel& model,
                             std::span<const std::size_t> order, CycleMode mode) {
  const std::size_t L = model.size();
  require_permutation(order, L);

  UpdatingCycle cycle;
  cycle.order.assign(order.begin(), order.end());
  bool some_step_shrinks = false;
  for (std::size_t i = 0; i < L; ++i) {
    const std::size_t cur = order[i];
    const std::size_t next = order[(i + 1) % L];
    const VarSet c = model.scope(cur);
    const VarSet& b = model.parents(next);
    const bool contained = b.is_subset_of(c);
    const bool proper = b.is_proper_subset_of(c);
    if (!contained || (mode == CycleMode::Strict && !proper)) {
      cycle.violations.push_back(
          {i, "parents " + to_string(b) + " of conditional " +
                  std::to_string(next + 1) +
                  (contained ? " equal" : " are not contained in") + " scope " +
                  to_string(c) + " of conditional " + std::to_string(cur + 1)});
    }
    some_step_shrinks = some_step_shrinks || proper;
  }
  if (cycle.violations.empty() && !some_step_shrinks) {
    cycle.violations.push_back(
        {std::nullopt, "no step drops a variable (c_i \\ b_{i+1} empty everywhere)"});
  }
  cycle.permissible = cycle.violations.empty();
  return cycle;
}

std::vector<UpdatingCycle> enumerate_permissible(const ConditionalModel& model,
                                                 CycleMode mode) {
  const std::size_t L = model.size();
  if (L > kMaxEnumerable) {
    throw Error(ErrorCode::TooManyConditionals,
                std::to_string(L) + " conditionals exceed the enumeration limit of " +
                    std::to_string(kMaxEnumerable));
  }
  std::vector<std::size_t> order(L);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<UpdatingCycle> out;
  // Fixing order[0] = 0 visits each rotation class exactly once.
  do {
    auto cycle = is_permissible(model, order, mode);
    if (cycle.permissible) out.push_back(std::move(cycle));
  } while (std::next_permutation(order.begin() + 1, order.end()));
  return out;
}

std::vector<ConditionalKind> classify(const ConditionalModel& model) {
  std::vector<ConditionalKind> kinds;
  for (std::size_t i = 0; i < model.size(); ++i) {
    kinds.push_back(model.is_full(i) ? ConditionalKind::Full
                                     : ConditionalKind::NonFull);
  }
  return kinds;
}

std::vector<std::size_t> canonical_rotation(std::span<const std::size_t> order) {
  std::vector<std::size_t> out(order.begin(), order.end());
  if (!out.empty()) {
    std::rotate(out.begin(), std::min_element(out.begin(), out.end()), out.end());
  }
  return out;
}

std::string order_label(std::span<const std::size_t> order) {
  std::string out = "<";
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(order[i] + 1);
  }
  return out + ">";
}

std::string target_label(const ConditionalModel& model,
                         std::span<const std::size_t> order) {
  std::string out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i) out += " -> ";
    out += names_of(model, model.target(order[i]));
  }
  return out;
}

void require_permissible(const UpdatingCycle& cycle) {
  if (cycle.permissible) return;
  std::string what = "cycle " + order_label(cycle.order) + " is not permissible";
  for (const auto& v : cycle.violations) what += "; " + v.reason;
  throw Error(ErrorCode::NotPermissible, what);
}

}  // namespace icr
