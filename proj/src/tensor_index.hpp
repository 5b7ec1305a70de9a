#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "icr/model.hpp"

namespace icr::detail {

std::size_t product(std::span<const std::size_t> dims);

std::vector<std::size_t> row_major_strides(std::span<const std::size_t> dims);

/// For every axis of a tensor over `outer`, the stride that axis adds to an
/// offset into a row-major tensor over `inner` (zero for axes not in inner).
std::vector<std::size_t> embed_strides(const VarSet& outer, const VarSet& inner,
                                       std::span<const std::size_t> inner_dims);

/// Iterates the cells of a row-major tensor of shape `dims` while keeping
/// one running offset per attached stride vector.
class Odometer {
 public:
  Odometer(std::span<const std::size_t> dims,
           std::vector<std::vector<std::size_t>> strides);

  std::size_t offset(std::size_t k) const { return offsets_[k]; }

  /// Advances to the next cell; false once every cell has been visited.
  bool next();

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::vector<std::size_t>> strides_;
  std::vector<std::size_t> digits_;
  std::vector<std::size_t> offsets_;
};

}  // namespace icr::detail
