#include "tensor_index.hpp"

#include <functional>
#include <numeric>

namespace icr::detail {

std::size_t product(std::span<const std::size_t> dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         std::multiplies<>());
}

std::vector<std::size_t> row_major_strides(std::span<const std::size_t> dims) {
  std::vector<std::size_t> strides(dims.size(), 1);
  for (std::size_t k = dims.size(); k-- > 1;) {
    strides[k - 1] = strides[k] * dims[k];
  }
  return strides;
}

std::vector<std::size_t> embed_strides(const VarSet& outer, const VarSet& inner,
                                       std::span<const std::size_t> inner_dims) {
  const auto inner_strides = row_major_strides(inner_dims);
  std::vector<std::size_t> out(outer.size(), 0);
  for (std::size_t k = 0; k < outer.size(); ++k) {
    if (inner.contains(outer[k])) {
      out[k] = inner_strides[inner.position(outer[k])];
    }
  }
  return out;
}

Odometer::Odometer(std::span<const std::size_t> dims,
                   std::vector<std::vector<std::size_t>> strides)
    : dims_(dims.begin(), dims.end()),
      strides_(std::move(strides)),
      digits_(dims_.size(), 0),
      offsets_(strides_.size(), 0) {}

bool Odometer::next() {
  for (std::size_t axis = dims_.size(); axis-- > 0;) {
    if (++digits_[axis] < dims_[axis]) {
      for (std::size_t k = 0; k < strides_.size(); ++k) {
        offsets_[k] += strides_[k][axis];
      }
      return true;
    }
    digits_[axis] = 0;
    for (std::size_t k = 0; k < strides_.size(); ++k) {
      offsets_[k] -= (dims_[axis] - 1) * strides_[k][axis];
    }
  }
  return false;
}

}  // namespace icr::detail
