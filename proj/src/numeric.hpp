#pragma once

#include <cmath>

namespace icr::detail {

/// r - log(1 + r) for r > -1, accurate when |r| is tiny (where the direct
/// difference cancels). Always >= 0.
inline double excess_log1p(double r) {
  if (std::abs(r) < 1e-3) {
    // Alternating series r^2/2 - r^3/3 + ...; eight terms reach full precision.
    double term = r * r;
    double sum = 0.0;
    for (int k = 2; k <= 9; ++k) {
      sum += ((k % 2 == 0) ? term : -term) / k;
      term *= r;
    }
    return sum;
  }
  return r - std::log1p(r);
}

}  // namespace icr::detail
