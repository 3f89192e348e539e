#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "qsdkit/errors.hpp"

namespace qsdkit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A point of the probability simplex {x >= 0, sum(x) = 1}.
///
/// Construction validates the invariant (entries non-negative, sum within
/// kSumTolerance of one). Use normalized() to project a non-negative vector
/// with positive mass onto the simplex by rescaling.
class ProbabilityVector {
 public:
  static constexpr double kSumTolerance = 1e-12;

  explicit ProbabilityVector(Vector entries) : p_(std::move(entries)) {
    if (p_.size() == 0) throw ContractError("probability vector must be non-empty");
    for (Eigen::Index i = 0; i < p_.size(); ++i) {
      if (!(p_[i] >= 0.0)) {
        throw DomainError("probability vector has negative or NaN entry at index " +
                          std::to_string(i));
      }
    }
    const double s = p_.sum();
    if (std::abs(s - 1.0) > kSumTolerance) {
      throw DomainError("probability vector sums to " + std::to_string(s) + ", not 1");
    }
  }

  static ProbabilityVector normalized(const Vector& weights) {
    if (weights.size() == 0) throw ContractError("cannot normalize an empty vector");
    if ((weights.array() < 0.0).any() || weights.hasNaN()) {
      throw DomainError("cannot normalize a vector with negative or NaN entries");
    }
    const double s = weights.sum();
    if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("cannot normalize a vector with zero mass");
    return ProbabilityVector(weights / s, Unchecked{});
  }

  static ProbabilityVector uniform(Eigen::Index d) {
    if (d <= 0) throw ContractError("dimension must be positive");
    return ProbabilityVector(Vector::Constant(d, 1.0 / static_cast<double>(d)), Unchecked{});
  }

  static ProbabilityVector point_mass(Eigen::Index d, Eigen::Index i) {
    if (d <= 0 || i < 0 || i >= d) throw ContractError("point mass index out of range");
    Vector v = Vector::Zero(d);
    v[i] = 1.0;
    return ProbabilityVector(std::move(v), Unchecked{});
  }

  Eigen::Index size() const noexcept { return p_.size(); }
  double operator[](Eigen::Index i) const { return p_[i]; }
  const Vector& values() const noexcept { return p_; }

 private:
  struct Unchecked {};
  ProbabilityVector(Vector v, Unchecked) : p_(std::move(v)) {}

  Vector p_;
};

inline double l1_distance(const ProbabilityVector& a, const ProbabilityVector& b) {
  if (a.size() != b.size()) throw ContractError("l1_distance: dimension mismatch");
  return (a.values() - b.values()).lpNorm<1>();
}

inline double squared_l2_distance(const ProbabilityVector& a, const ProbabilityVector& b) {
  if (a.size() != b.size()) throw ContractError("squared_l2_distance: dimension mismatch");
  return (a.values() - b.values()).squaredNorm();
}

}  // namespace qsdkit
