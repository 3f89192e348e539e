#pragma once

#include <concepts>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "qsdkit/errors.hpp"
#include "qsdkit/probability_vector.hpp"
#include "qsdkit/rng.hpp"

namespace qsdkit {

enum class ChainKind { discrete_time, continuous_time };

inline const char* to_string(ChainKind kind) {
  return kind == ChainKind::discrete_time ? "dt" : "ct";
}

using StateId = std::int64_t;
inline constexpr StateId kAbsorbed = -1;

/// One transition drawn from an absorbing chain. `next` is kAbsorbed when the
/// chain leaves the transient set; `holding_time` is 1 for discrete-time chains
/// and the exponential sojourn in the current state for continuous-time ones.
struct Step {
  StateId next;
  double holding_time;
};

/// Minimal sampler contract. Implementations must reach kAbsorbed from every
/// state with probability one and be deterministic given the rng position.
template <class C>
concept ImplicitChain = requires(const C& chain, StateId state, Rng& rng) {
  { chain.dim() } -> std::convertible_to<StateId>;
  { chain.sample_step(state, rng) } -> std::same_as<Step>;
};

namespace detail {

inline constexpr double kRowSumSlack = 1e-12;

// Flattened per-row categorical tables over the non-zero transient targets.
// Absorption takes whatever mass is left after the last cumulative entry.
class JumpTable {
 public:
  JumpTable() = default;

  // probs(i, j) is the probability of jumping i -> j (zero entries skipped).
  template <class F>
  JumpTable(Eigen::Index d, F&& probs) {
    offsets_.reserve(static_cast<std::size_t>(d) + 1);
    offsets_.push_back(0);
    for (Eigen::Index i = 0; i < d; ++i) {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double p = probs(i, j);
        if (p > 0.0) {
          acc += p;
          targets_.push_back(static_cast<StateId>(j));
          cumulative_.push_back(acc);
        }
      }
      offsets_.push_back(targets_.size());
    }
  }

  StateId pick(StateId row, double u) const noexcept {
    const auto begin = offsets_[static_cast<std::size_t>(row)];
    const auto end = offsets_[static_cast<std::size_t>(row) + 1];
    for (auto k = begin; k < end; ++k) {
      if (u < cumulative_[k]) return targets_[k];
    }
    return kAbsorbed;
  }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<StateId> targets_;
  std::vector<double> cumulative_;
};

// Strong connectivity of the off-diagonal non-zero pattern.
inline bool is_irreducible(const Matrix& q) {
  const Eigen::Index d = q.rows();
  if (d <= 1) return true;
  auto reaches_all = [&](bool transpose) {
    std::vector<char> seen(static_cast<std::size_t>(d), 0);
    std::vector<Eigen::Index> stack{0};
    seen[0] = 1;
    Eigen::Index count = 1;
    while (!stack.empty()) {
      const Eigen::Index i = stack.back();
      stack.pop_back();
      for (Eigen::Index j = 0; j < d; ++j) {
        const double w = transpose ? q(j, i) : q(i, j);
        if (j != i && w != 0.0 && !seen[static_cast<std::size_t>(j)]) {
          seen[static_cast<std::size_t>(j)] = 1;
          ++count;
          stack.push_back(j);
        }
      }
    }
    return count == d;
  };
  return reaches_all(false) && reaches_all(true);
}

inline void require_square(const Matrix& q, const char* what) {
  if (q.rows() == 0 || q.rows() != q.cols()) {
    throw ContractError(std::string(what) + ": transient block must be square and non-empty");
  }
  if (!q.allFinite()) throw DomainError(std::string(what) + ": matrix has non-finite entries");
}

}  // namespace detail

/// Discrete-time absorbing chain given by its substochastic transient block Q.
/// absorb_prob(i) = 1 - sum_j Q(i, j). Immutable once built.
class AbsorbingChainDT {
 public:
  explicit AbsorbingChainDT(Matrix q) : q_(std::move(q)) {
    detail::require_square(q_, "AbsorbingChainDT");
    bool leaks = false;
    for (Eigen::Index i = 0; i < q_.rows(); ++i) {
      for (Eigen::Index j = 0; j < q_.cols(); ++j) {
        if (q_(i, j) < 0.0 || q_(i, j) > 1.0) {
          throw DomainError("AbsorbingChainDT: entry outside [0,1] at (" + std::to_string(i) +
                            "," + std::to_string(j) + ")");
        }
      }
      const double s = q_.row(i).sum();
      if (s > 1.0 + detail::kRowSumSlack) {
        throw DomainError("AbsorbingChainDT: row " + std::to_string(i) + " sums above 1");
      }
      if (s < 1.0 - detail::kRowSumSlack) leaks = true;
    }
    if (!leaks) throw DomainError("AbsorbingChainDT: no row leaks mass to absorption (Q is stochastic)");
    if (!detail::is_irreducible(q_)) throw DomainError("AbsorbingChainDT: Q is reducible");
    table_ = detail::JumpTable(q_.rows(), [this](Eigen::Index i, Eigen::Index j) { return q_(i, j); });
  }

  static constexpr ChainKind kind = ChainKind::discrete_time;

  StateId dim() const noexcept { return q_.rows(); }
  const Matrix& q() const noexcept { return q_; }
  double absorb_prob(Eigen::Index i) const { return 1.0 - q_.row(i).sum(); }

  Step sample_step(StateId state, Rng& rng) const noexcept {
    return {table_.pick(state, rng.uniform()), 1.0};
  }

 private:
  Matrix q_;
  detail::JumpTable table_;
};

/// Continuous-time absorbing chain given by the transient block of its rate
/// matrix: off-diagonal rates >= 0, diagonal < 0, rows summing to <= 0 with at
/// least one strictly negative (the killing rate).
class AbsorbingChainCT {
 public:
  explicit AbsorbingChainCT(Matrix q) : q_(std::move(q)) {
    detail::require_square(q_, "AbsorbingChainCT");
    const Eigen::Index d = q_.rows();
    bool leaks = false;
    exit_rates_.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        if (i != j && q_(i, j) < 0.0) {
          throw DomainError("AbsorbingChainCT: negative off-diagonal rate at (" + std::to_string(i) +
                            "," + std::to_string(j) + ")");
        }
      }
      if (!(q_(i, i) < 0.0)) {
        throw DegenerateChainError("AbsorbingChainCT: state " + std::to_string(i) +
                                   " has zero exit rate");
      }
      const double s = q_.row(i).sum();
      const double scale = -q_(i, i);
      if (s > detail::kRowSumSlack * scale) {
        throw DomainError("AbsorbingChainCT: row " + std::to_string(i) + " has positive sum");
      }
      if (s < -detail::kRowSumSlack * scale) leaks = true;
      exit_rates_[i] = scale;
    }
    if (!leaks) throw DomainError("AbsorbingChainCT: no row has a killing rate");
    if (!detail::is_irreducible(q_)) throw DomainError("AbsorbingChainCT: jump structure is reducible");
    table_ = detail::JumpTable(d, [this](Eigen::Index i, Eigen::Index j) {
      return i == j ? 0.0 : q_(i, j) / exit_rates_[i];
    });
  }

  static constexpr ChainKind kind = ChainKind::continuous_time;

  StateId dim() const noexcept { return q_.rows(); }
  const Matrix& q() const noexcept { return q_; }
  double exit_rate(Eigen::Index i) const { return exit_rates_[i]; }
  double killing_rate(Eigen::Index i) const { return -q_.row(i).sum(); }

  Step sample_step(StateId state, Rng& rng) const noexcept {
    const double hold = rng.exponential(exit_rates_[state]);
    return {table_.pick(state, rng.uniform()), hold};
  }

 private:
  Matrix q_;
  Vector exit_rates_;
  detail::JumpTable table_;
};

static_assert(ImplicitChain<AbsorbingChainDT>);
static_assert(ImplicitChain<AbsorbingChainCT>);

using AnyChain = std::variant<AbsorbingChainDT, AbsorbingChainCT>;

inline ChainKind kind_of(const AnyChain& chain) {
  return std::holds_alternative<AbsorbingChainDT>(chain) ? ChainKind::discrete_time
                                                         : ChainKind::continuous_time;
}

inline const Matrix& transient_block(const AnyChain& chain) {
  return std::visit([](const auto& c) -> const Matrix& { return c.q(); }, chain);
}

// ---------------------------------------------------------------------------
// Chain families
// ---------------------------------------------------------------------------

/// Two transient states that each move to either state with probability
/// (1-epsilon)/2 and are absorbed with probability epsilon.
inline AbsorbingChainDT make_loopy_chain(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("loopy chain: epsilon must lie in (0,1)");
  return AbsorbingChainDT(Matrix::Constant(2, 2, (1.0 - epsilon) / 2.0));
}

/// Jump chain of an M/M/1 queue with room for `capacity` customers, killed when
/// the queue empties. Index k-1 holds k customers. Arrivals win with
/// probability rho/(1+rho); a full queue turns an arrival into a self-loop.
inline AbsorbingChainDT make_mm1k_chain(double rho, int capacity) {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw DomainError("mm1k chain: rho must be positive");
  if (capacity < 1) throw DomainError("mm1k chain: capacity must be at least 1");
  const double up = rho / (1.0 + rho);
  const double down = 1.0 / (1.0 + rho);
  Matrix q = Matrix::Zero(capacity, capacity);
  for (int k = 0; k < capacity; ++k) {
    if (k + 1 < capacity) {
      q(k, k + 1) = up;
    } else {
      q(k, k) = up;
    }
    if (k > 0) q(k, k - 1) = down;
  }
  return AbsorbingChainDT(std::move(q));
}

/// Contact process on the complete graph with n nodes, lumped to the number of
/// infected nodes k = 1..n (index k-1). Births at rate lambda*k*(n-k)/(n-1),
/// deaths at rate k; k = 0 is absorbing.
inline double contact_birth_rate(int n_nodes, double lambda, int k) {
  return lambda * k * (n_nodes - k) / static_cast<double>(n_nodes - 1);
}

inline AbsorbingChainCT make_contact_complete(int n_nodes, double lambda) {
  if (n_nodes < 2) throw DomainError("contact chain: need at least 2 nodes");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("contact chain: lambda must be positive");
  Matrix q = Matrix::Zero(n_nodes, n_nodes);
  for (int k = 1; k <= n_nodes; ++k) {
    const int i = k - 1;
    const double birth = contact_birth_rate(n_nodes, lambda, k);
    const double death = k;
    if (k < n_nodes) q(i, i + 1) = birth;
    if (k > 1) q(i, i - 1) = death;
    q(i, i) = -(birth + death);
  }
  return AbsorbingChainCT(std::move(q));
}

/// The lumped contact process without a materialized rate matrix, for node
/// counts where a dense d x d block is out of reach. State id k-1 <-> k infected.
class ContactCompleteSampler {
 public:
  ContactCompleteSampler(int n_nodes, double lambda, double killing = 0.0)
      : n_(n_nodes), lambda_(lambda), killing_(killing) {
    if (n_nodes < 2) throw DomainError("contact sampler: need at least 2 nodes");
    if (!(lambda > 0.0)) throw DomainError("contact sampler: lambda must be positive");
    if (killing < 0.0) throw DomainError("contact sampler: killing rate must be non-negative");
  }

  StateId dim() const noexcept { return n_; }

  Step sample_step(StateId state, Rng& rng) const noexcept {
    const int k = static_cast<int>(state) + 1;
    const double birth = contact_birth_rate(n_, lambda_, k);
    const double death = k;
    const double total = birth + death + killing_;
    const double hold = rng.exponential(total);
    const double u = rng.uniform() * total;
    if (u < birth) return {state + 1, hold};
    if (u < birth + death) return {k == 1 ? kAbsorbed : state - 1, hold};
    return {kAbsorbed, hold};
  }

 private:
  int n_;
  double lambda_;
  double killing_;
};

static_assert(ImplicitChain<ContactCompleteSampler>);

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

/// Scales Q by alpha in (0,1]: eigenvalues shrink by alpha, left eigenvectors stay.
inline AbsorbingChainDT doeblinize_dt(const AbsorbingChainDT& chain, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("doeblinize_dt: alpha must lie in (0,1]");
  if (alpha == 1.0) return chain;
  return AbsorbingChainDT(alpha * chain.q());
}

/// Adds a uniform killing rate alpha >= 0, i.e. Q - alpha*I.
inline AbsorbingChainCT doeblinize_ct(const AbsorbingChainCT& chain, double alpha) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw DomainError("doeblinize_ct: alpha must be non-negative");
  if (alpha == 0.0) return chain;
  Matrix q = chain.q();
  q.diagonal().array() -= alpha;
  return AbsorbingChainCT(std::move(q));
}

/// I + Q/nu with nu the largest exit rate.
inline AbsorbingChainDT uniformize(const AbsorbingChainCT& chain) {
  const double nu = (-chain.q().diagonal()).maxCoeff();
  if (!(nu > 0.0)) throw DegenerateChainError("uniformize: all exit rates are zero");
  const Eigen::Index d = chain.q().rows();
  return AbsorbingChainDT(Matrix::Identity(d, d) + chain.q() / nu);
}

// ---------------------------------------------------------------------------
// Plain-text matrix format: "dt d" or "ct d", then d rows of d reals.
// ---------------------------------------------------------------------------

inline void write_chain(std::ostream& out, const AnyChain& chain) {
  const Matrix& q = transient_block(chain);
  const auto old_precision = out.precision(17);
  out << to_string(kind_of(chain)) << ' ' << q.rows() << '\n';
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      if (j) out << ' ';
      out << q(i, j);
    }
    out << '\n';
  }
  out.precision(old_precision);
}

inline AnyChain read_chain(std::istream& in) {
  std::string tag;
  long long d = 0;
  if (!(in >> tag >> d)) throw DomainError("chain file: missing 'dt d' / 'ct d' header");
  if (tag != "dt" && tag != "ct") throw DomainError("chain file: unknown chain kind '" + tag + "'");
  if (d <= 0) throw DomainError("chain file: dimension must be positive");
  Matrix q(d, d);
  for (long long i = 0; i < d; ++i) {
    for (long long j = 0; j < d; ++j) {
      if (!(in >> q(i, j))) {
        throw DomainError("chain file: expected " + std::to_string(d * d) + " entries");
      }
    }
  }
  std::string trailing;
  if (in >> trailing) throw DomainError("chain file: unexpected trailing token '" + trailing + "'");
  if (tag == "dt") return AbsorbingChainDT(std::move(q));
  return AbsorbingChainCT(std::move(q));
}

inline std::string chain_to_string(const AnyChain& chain) {
  std::ostringstream out;
  write_chain(out, chain);
  return out.str();
}

}  // namespace qsdkit
