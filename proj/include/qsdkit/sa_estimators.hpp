#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "qsdkit/errors.hpp"
#include "qsdkit/markov_models.hpp"
#include "qsdkit/probability_vector.hpp"
#include "qsdkit/simplex_projection.hpp"
#include "qsdkit/tour_simulator.hpp"

namespace qsdkit {

enum class Variant { vanilla, projected, projected_avg };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::vanilla: return "vanilla";
    case Variant::projected: return "projected";
    case Variant::projected_avg: return "projected_avg";
  }
  return "?";
}

inline Variant parse_variant(std::string_view name) {
  if (name == "vanilla") return Variant::vanilla;
  if (name == "projected") return Variant::projected;
  if (name == "projected_avg") return Variant::projected_avg;
  throw DomainError("unknown variant '" + std::string(name) + "'");
}

/// Step sizes c / (n+1)^alpha with alpha in (1/2, 1], so that the steps sum to
/// infinity while their squares stay summable.
class StepSchedule {
 public:
  explicit StepSchedule(double c = 1.0, double alpha = 0.7) : c_(c), alpha_(alpha) {
    if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("step schedule: c must be positive");
    if (!(alpha > 0.5 && alpha <= 1.0)) throw DomainError("step schedule: alpha must lie in (1/2, 1]");
  }

  double operator()(std::int64_t n) const { return c_ / std::pow(static_cast<double>(n + 1), alpha_); }

  double c() const noexcept { return c_; }
  double alpha() const noexcept { return alpha_; }

 private:
  double c_;
  double alpha_;
};

/// Running mean of simplex points; a convex combination, so it stays on the simplex.
class PolyakAverage {
 public:
  void add(const ProbabilityVector& mu) {
    ++count_;
    if (count_ == 1) {
      mean_ = mu.values();
    } else {
      mean_ += (mu.values() - mean_) / static_cast<double>(count_);
    }
  }

  std::int64_t count() const noexcept { return count_; }
  bool empty() const noexcept { return count_ == 0; }

  ProbabilityVector value() const {
    if (empty()) throw ContractError("polyak average: averaging window is empty");
    return ProbabilityVector::normalized(mean_);
  }

 private:
  Vector mean_;
  std::int64_t count_ = 0;
};

/// State of one stochastic-approximation run after n completed tours.
struct EstimatorState {
  ProbabilityVector mu;
  double T = 1.0;  // running mean lifetime, seeded by T0
  std::int64_t n = 0;
  Variant variant = Variant::vanilla;
  std::int64_t average_from = 1;  // first iterate index admitted to the Polyak window
  PolyakAverage average;

  static EstimatorState initial(ProbabilityVector mu0, double T0 = 1.0, Variant variant = Variant::vanilla,
                                std::int64_t average_from = 1) {
    if (!(T0 >= 1.0) || !std::isfinite(T0)) throw DomainError("estimator: T0 must be >= 1");
    return EstimatorState{std::move(mu0), T0, 0, variant, std::max<std::int64_t>(average_from, 1), {}};
  }
};

namespace detail {

// Per-step tolerance on |sum(mu) - 1| before renormalization.
inline constexpr double kMaxSimplexDrift = 1e-9;

inline void check_tour(const EstimatorState& s, const Tour& tour) {
  if (tour.occupancy.size() != s.mu.size()) throw ContractError("estimator: tour dimension does not match mu");
  if (!(tour.tau > 0.0)) throw ContractError("estimator: tour lifetime must be positive");
}

inline ProbabilityVector renormalize(const Vector& next) {
  const double drift = std::abs(next.sum() - 1.0);
  if (!(drift <= kMaxSimplexDrift)) {
    throw NumericError("estimator: iterate drifted " + std::to_string(drift) + " off the simplex");
  }
  return ProbabilityVector::normalized(next);
}

inline void finish_step(EstimatorState& s, ProbabilityVector next, double tau) {
  s.mu = std::move(next);
  s.T += (tau - s.T) / static_cast<double>(s.n + 2);
  ++s.n;
  if (s.variant == Variant::projected_avg && s.n >= s.average_from) s.average.add(s.mu);
}

}  // namespace detail

/// mu_{n+1} = mu_n + (1/(n+1)) (occ - tau mu_n) / (T_n + tau/(n+1)), then
/// T_{n+1} = T_n + (tau - T_n)/(n+2). Valid for discrete- and continuous-time
/// tours alike (visit counts or occupation times).
inline void apply_vanilla(EstimatorState& s, const Tour& tour) {
  detail::check_tour(s, tour);
  // (n+1) T_n is the total lifetime so far (T0 counted as the zeroth tour), so
  // the update is the cumulative empirical occupation measure; evaluating it in
  // that form keeps every entry non-negative in floating point.
  const double mass = static_cast<double>(s.n + 1) * s.T;
  Vector next = (mass * s.mu.values() + tour.occupancy) / (mass + tour.tau);
  detail::finish_step(s, detail::renormalize(next), tour.tau);
}

/// mu_{n+1} = Proj_H[mu_n + eps_n (occ - tau mu_n)]; the projection only runs
/// when the candidate leaves the non-negative orthant.
inline void apply_projected(EstimatorState& s, const Tour& tour, double eps) {
  detail::check_tour(s, tour);
  if (!(eps > 0.0)) throw ContractError("estimator: step size must be positive");
  Vector next = s.mu.values() + eps * (tour.occupancy - tour.tau * s.mu.values());
  ProbabilityVector projected = (next.array() < 0.0).any() ? project_simplex(next) : detail::renormalize(next);
  detail::finish_step(s, std::move(projected), tour.tau);
}

inline EstimatorState step_vanilla_dt(EstimatorState s, const Tour& tour) {
  if (s.variant != Variant::vanilla) throw ContractError("step_vanilla_dt: state is not a vanilla run");
  apply_vanilla(s, tour);
  return s;
}

inline EstimatorState step_projected(EstimatorState s, const Tour& tour, double eps) {
  if (s.variant == Variant::vanilla) throw ContractError("step_projected: state is a vanilla run");
  apply_projected(s, tour, eps);
  return s;
}

/// Continuous-time update; the vanilla variant ignores eps.
inline EstimatorState step_ct(EstimatorState s, const Tour& tour, double eps) {
  if (s.variant == Variant::vanilla) {
    apply_vanilla(s, tour);
  } else {
    apply_projected(s, tour, eps);
  }
  return s;
}

inline ProbabilityVector polyak_average(const EstimatorState& s) { return s.average.value(); }

/// The estimate a variant reports: the Polyak average once its window is
/// non-empty, the raw iterate otherwise.
inline ProbabilityVector current_estimate(const EstimatorState& s) {
  if (s.variant == Variant::projected_avg && !s.average.empty()) return s.average.value();
  return s.mu;
}

/// Iteration indices 1..n_max, log-spaced at `per_decade` points per decade,
/// always including n_max.
inline std::vector<std::int64_t> log_spaced_points(std::int64_t n_max, int per_decade = 25) {
  if (n_max < 1) throw ContractError("log_spaced_points: n_max must be >= 1");
  if (per_decade < 1) throw ContractError("log_spaced_points: per_decade must be >= 1");
  std::vector<std::int64_t> pts;
  for (int k = 0;; ++k) {
    const auto n = static_cast<std::int64_t>(std::llround(std::pow(10.0, k / static_cast<double>(per_decade))));
    if (n > n_max) break;
    if (pts.empty() || pts.back() != n) pts.push_back(n);
  }
  if (pts.back() != n_max) pts.push_back(n_max);
  return pts;
}

struct RunOptions {
  Variant variant = Variant::vanilla;
  StepSchedule schedule{};
  std::int64_t n_tours = 0;
  double T0 = 1.0;
  std::int64_t average_from = 1;
  std::int64_t max_tour_steps = kDefaultMaxTourSteps;
  std::vector<std::int64_t> record_at;  // sorted; the sink sees the state after these n
};

/// Drives tour sampling and the chosen recursion for opts.n_tours tours.
/// The vanilla variant always steps with 1/(n+1); the schedule only feeds the
/// projected variants.
template <ImplicitChain C, class Sink>
EstimatorState run_estimator(const C& chain, const RunOptions& opts, ProbabilityVector mu0, Rng& rng,
                             Sink&& sink) {
  if (mu0.size() != chain.dim()) throw ContractError("run_estimator: mu0 has wrong dimension");
  if (opts.n_tours < 0) throw ContractError("run_estimator: negative tour count");
  EstimatorState state = EstimatorState::initial(std::move(mu0), opts.T0, opts.variant, opts.average_from);
  Tour tour;
  tour.occupancy.resize(state.mu.size());
  auto next_record = opts.record_at.begin();
  while (next_record != opts.record_at.end() && *next_record < 1) ++next_record;
  for (std::int64_t k = 0; k < opts.n_tours; ++k) {
    sample_tour(chain, state.mu, rng, tour, opts.max_tour_steps);
    if (state.variant == Variant::vanilla) {
      apply_vanilla(state, tour);
    } else {
      apply_projected(state, tour, opts.schedule(state.n));
    }
    if (next_record != opts.record_at.end() && *next_record == state.n) {
      sink(static_cast<const EstimatorState&>(state));
      ++next_record;
    }
  }
  return state;
}

template <ImplicitChain C>
EstimatorState run_estimator(const C& chain, const RunOptions& opts, ProbabilityVector mu0, Rng& rng) {
  return run_estimator(chain, opts, std::move(mu0), rng, [](const EstimatorState&) {});
}

}  // namespace qsdkit
