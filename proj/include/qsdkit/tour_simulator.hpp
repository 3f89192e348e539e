#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qsdkit/markov_models.hpp"

namespace qsdkit {

inline constexpr std::int64_t kDefaultMaxTourSteps = 100'000'000;

/// One excursion from the initial law to absorption.
/// occupancy(x) is the number of visits to x (discrete time) or the time spent
/// in x (continuous time); tau is the lifetime and equals occupancy.sum().
struct Tour {
  Vector occupancy;
  double tau = 0.0;
};

/// Tour of an implicit chain; occupancy holds only the visited states, sorted by id.
struct SparseTour {
  std::vector<std::pair<StateId, double>> occupancy;
  double tau = 0.0;
  std::int64_t steps = 0;
};

/// Inverse-CDF draw of an index from p with one uniform.
inline StateId sample_state(const ProbabilityVector& p, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  StateId last_positive = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      acc += p[i];
      last_positive = i;
      if (u < acc) return i;
    }
  }
  // u landed in the roundoff gap above the final cumulative sum.
  return last_positive;
}

/// Simulates chain from `start` until absorption, accumulating into `out`.
/// `out.occupancy` must already have chain.dim() entries; it is zeroed here so
/// that callers looping over tours can reuse the buffer.
template <ImplicitChain C>
void sample_tour_from(const C& chain, StateId start, Rng& rng, Tour& out,
                      std::int64_t max_steps = kDefaultMaxTourSteps) {
  out.occupancy.setZero();
  double tau = 0.0;
  StateId state = start;
  std::int64_t steps = 0;
  while (state != kAbsorbed) {
    if (++steps > max_steps) {
      throw RunawayTourError("tour exceeded " + std::to_string(max_steps) + " steps without absorbing");
    }
    const Step step = chain.sample_step(state, rng);
    out.occupancy[state] += step.holding_time;
    tau += step.holding_time;
    state = step.next;
  }
  out.tau = tau;
}

template <ImplicitChain C>
void sample_tour(const C& chain, const ProbabilityVector& initial, Rng& rng, Tour& out,
                 std::int64_t max_steps = kDefaultMaxTourSteps) {
  if (initial.size() != chain.dim()) throw ContractError("sample_tour: initial law has wrong dimension");
  if (out.occupancy.size() != initial.size()) out.occupancy.resize(initial.size());
  sample_tour_from(chain, sample_state(initial, rng), rng, out, max_steps);
}

inline Tour sample_tour_dt(const AbsorbingChainDT& chain, const ProbabilityVector& initial, Rng& rng,
                           std::int64_t max_steps = kDefaultMaxTourSteps) {
  Tour tour;
  sample_tour(chain, initial, rng, tour, max_steps);
  return tour;
}

/// Jump-and-hold simulation: Exp(-q_ii) sojourn, then a jump to j with
/// probability q_ij / (-q_ii) or absorption with the remaining probability.
inline Tour sample_tour_ct(const AbsorbingChainCT& chain, const ProbabilityVector& initial, Rng& rng,
                           std::int64_t max_steps = kDefaultMaxTourSteps) {
  Tour tour;
  sample_tour(chain, initial, rng, tour, max_steps);
  return tour;
}

template <ImplicitChain C>
SparseTour sample_tour_implicit(const C& chain, StateId initial_state, Rng& rng,
                                std::int64_t max_steps = kDefaultMaxTourSteps) {
  if (initial_state < 0 || initial_state >= static_cast<StateId>(chain.dim())) {
    throw ContractError("sample_tour_implicit: initial state out of range");
  }
  std::unordered_map<StateId, double> visits;
  SparseTour tour;
  StateId state = initial_state;
  while (state != kAbsorbed) {
    if (++tour.steps > max_steps) {
      throw RunawayTourError("tour exceeded " + std::to_string(max_steps) + " steps without absorbing");
    }
    const Step step = chain.sample_step(state, rng);
    visits[state] += step.holding_time;
    tour.tau += step.holding_time;
    state = step.next;
  }
  tour.occupancy.assign(visits.begin(), visits.end());
  std::sort(tour.occupancy.begin(), tour.occupancy.end());
  return tour;
}

}  // namespace qsdkit
