#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "qsdkit/probability_vector.hpp"

namespace qsdkit {

/// Euclidean projection onto the probability simplex (sort-and-threshold).
///
/// With u the entries sorted in decreasing order, let k be the largest index
/// such that u_k > (u_1 + ... + u_k - 1) / k and theta that threshold; the
/// projection is max(v_i - theta, 0). Equal entries of v map to equal outputs.
inline ProbabilityVector project_simplex(const Vector& v) {
  const Eigen::Index d = v.size();
  if (d == 0) throw ContractError("project_simplex: empty vector");
  if (!v.allFinite()) throw DomainError("project_simplex: non-finite input");

  std::vector<double> u(v.data(), v.data() + d);
  std::stable_sort(u.begin(), u.end(), std::greater<>{});

  double prefix = 0.0;
  double theta = u[0] - 1.0;
  for (Eigen::Index k = 1; k <= d; ++k) {
    prefix += u[static_cast<std::size_t>(k - 1)];
    const double t = (prefix - 1.0) / static_cast<double>(k);
    if (u[static_cast<std::size_t>(k - 1)] > t) theta = t;
  }
  return ProbabilityVector::normalized((v.array() - theta).max(0.0).matrix());
}

}  // namespace qsdkit
