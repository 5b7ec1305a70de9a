#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icr/model.hpp"

namespace icr {

/// Permissive: b_{next} must be contained in c_{current} at every step and
/// at least one step must leave something behind (u_i non-empty).
/// Strict: b_{next} must be a proper subset of c_{current} at every step.
enum class CycleMode { Permissive, Strict };

struct CycleViolation {
  /// Step index i in the order (the step from order[i] to order[i+1]);
  /// empty for the global "no step shrinks the scope" failure.
  std::optional<std::size_t> position;
  std::string reason;
};

struct UpdatingCycle {
  /// Zero-based conditional indices in update order; wraps cyclically.
  std::vector<std::size_t> order;
  bool permissible = false;
  std::vector<CycleViolation> violations;
};

UpdatingCycle is_permissible(const ConditionalModel& model,
                             std::span<const std::size_t> order,
                             CycleMode mode = CycleMode::Permissive);

/// Every permissible cycle, one per rotation class, each starting at the
/// smallest conditional index. Requires L <= 9.
std::vector<UpdatingCycle> enumerate_permissible(
    const ConditionalModel& model, CycleMode mode = CycleMode::Permissive);

enum class ConditionalKind { Full, NonFull };

std::vector<ConditionalKind> classify(const ConditionalModel& model);

/// Rotation of `order` that starts at its smallest element.
std::vector<std::size_t> canonical_rotation(std::span<const std::size_t> order);

/// "<1,3,2>" with one-based conditional indices.
std::string order_label(std::span<const std::size_t> order);

/// "X1 -> X3 -> X2": the target blocks in update order.
std::string target_label(const ConditionalModel& model,
                         std::span<const std::size_t> order);

/// Throws NotPermissible listing the violations when `cycle` is rejected.
void require_permissible(const UpdatingCycle& cycle);

}  // namespace icr
