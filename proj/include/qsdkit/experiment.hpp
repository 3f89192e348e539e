#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <future>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "qsdkit/errors.hpp"
#include "qsdkit/markov_models.hpp"
#include "qsdkit/sa_estimators.hpp"
#include "qsdkit/spectral_oracle.hpp"

namespace qsdkit {

inline constexpr Eigen::Index kMaxOracleDim = 512;
inline constexpr std::size_t kMaxRecordedPoints = 10'000;

// ---------------------------------------------------------------------------
// Chain specs: "loopy:<eps>", "mm1:<rho>:<K>", "contact:<n>:<lambda>" or a chain file.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) return parts;
    start = pos + 1;
  }
}

inline double parse_double(std::string_view token, std::string_view what) {
  double value = 0.0;
  const auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || end != token.data() + token.size() || !std::isfinite(value)) {
    throw DomainError("cannot parse " + std::string(what) + " from '" + std::string(token) + "'");
  }
  return value;
}

inline long long parse_integer(std::string_view token, std::string_view what) {
  long long value = 0;
  const auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || end != token.data() + token.size()) {
    throw DomainError("cannot parse " + std::string(what) + " from '" + std::string(token) + "'");
  }
  return value;
}

inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

inline int checked_int(long long v, std::string_view what) {
  if (v < 1 || v > 1'000'000) throw DomainError(std::string(what) + " out of range");
  return static_cast<int>(v);
}

}  // namespace detail

inline AnyChain parse_chain(std::string_view spec) {
  const auto parts = detail::split(spec, ':');
  const std::string_view family = parts.front();
  auto want = [&](std::size_t n) {
    if (parts.size() != n + 1) {
      throw DomainError("chain spec '" + std::string(spec) + "' expects " + std::to_string(n) + " parameter(s)");
    }
  };
  if (family == "loopy") {
    want(1);
    return make_loopy_chain(detail::parse_double(parts[1], "epsilon"));
  }
  if (family == "mm1") {
    want(2);
    return make_mm1k_chain(detail::parse_double(parts[1], "rho"),
                           detail::checked_int(detail::parse_integer(parts[2], "capacity"), "capacity"));
  }
  if (family == "contact") {
    want(2);
    return make_contact_complete(detail::checked_int(detail::parse_integer(parts[1], "node count"), "node count"),
                                 detail::parse_double(parts[2], "lambda"));
  }
  std::ifstream in{std::string(spec)};
  if (!in) throw DomainError("'" + std::string(spec) + "' is neither a builtin chain nor a readable chain file");
  return read_chain(in);
}

/// Doeblinization (scale for DT, killing shift for CT) and optional uniformization, in that order.
inline AnyChain transform_chain(const AnyChain& base, std::optional<double> doeblin, bool uniformized) {
  AnyChain out = base;
  if (doeblin) {
    out = std::visit(
        [&](const auto& c) -> AnyChain {
          if constexpr (std::decay_t<decltype(c)>::kind == ChainKind::discrete_time) {
            return doeblinize_dt(c, *doeblin);
          } else {
            return doeblinize_ct(c, *doeblin);
          }
        },
        out);
  }
  if (uniformized) {
    const auto* ct = std::get_if<AbsorbingChainCT>(&out);
    if (!ct) throw DomainError("uniformization applies to continuous-time chains only");
    out = uniformize(*ct);
  }
  return out;
}

/// "uniform" or "point:<i>".
inline ProbabilityVector parse_initial_law(std::string_view spec, Eigen::Index dim) {
  if (spec == "uniform") return ProbabilityVector::uniform(dim);
  const auto parts = detail::split(spec, ':');
  if (parts.size() == 2 && parts[0] == "point") {
    const long long i = detail::parse_integer(parts[1], "state index");
    if (i < 0 || i >= dim) throw DomainError("initial state index out of range");
    return ProbabilityVector::point_mass(dim, static_cast<Eigen::Index>(i));
  }
  throw DomainError("initial law must be 'uniform' or 'point:<i>', got '" + std::string(spec) + "'");
}

// ---------------------------------------------------------------------------
// Configuration and results
// ---------------------------------------------------------------------------

struct RunConfig {
  std::string chain = "loopy:0.2";
  std::optional<double> doeblin;
  bool uniformized = false;
  std::string initial = "uniform";
  Variant variant = Variant::vanilla;
  StepSchedule schedule{};
  std::int64_t n_tours = 100'000;
  int replicates = 1;
  std::uint64_t seed = 0;
  std::optional<std::int64_t> average_from;  // default ceil(0.1 * n_tours)
  int points_per_decade = 25;
  bool record_mu = false;
  unsigned threads = 0;  // 0: hardware concurrency
  std::int64_t max_tour_steps = kDefaultMaxTourSteps;

  void validate() const {
    if (replicates < 1) throw DomainError("replicates must be >= 1");
    if (n_tours < 1) throw DomainError("tours must be >= 1");
    if (points_per_decade < 1) throw DomainError("points per decade must be >= 1");
    if (average_from && *average_from < 0) throw DomainError("averaging start must be >= 0");
    if (log_spaced_points(n_tours, points_per_decade).size() > kMaxRecordedPoints) {
      throw DomainError("record stride yields too many points");
    }
  }

  std::int64_t averaging_start() const {
    const std::int64_t k = average_from ? *average_from : (n_tours + 9) / 10;
    return std::max<std::int64_t>(k, 1);
  }
};

struct CurvePoint {
  std::int64_t n = 0;
  double mse = std::numeric_limits<double>::quiet_NaN();     // mean squared L2 error
  double err_l1 = std::numeric_limits<double>::quiet_NaN();  // mean L1 error
  double T = 0.0;                                            // mean T_n
  Vector mu;                                                 // mean estimate
};

struct MseCurve {
  std::vector<CurvePoint> points;
  std::optional<double> slope;
  std::optional<ProbabilityVector> oracle;
  std::vector<std::string> warnings;

  const CurvePoint& final_point() const {
    if (points.empty()) throw ContractError("empty curve");
    return points.back();
  }
};

/// Least-squares slope of log10(mse) against log10(n) over the last half of the points.
inline double estimate_rate(const std::vector<std::int64_t>& n, const std::vector<double>& mse) {
  if (n.size() != mse.size()) throw ContractError("estimate_rate: length mismatch");
  if (n.size() < 10) throw ContractError("estimate_rate: need at least 10 recorded points");
  const std::size_t first = n.size() / 2;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(n.size() - first);
  for (std::size_t i = first; i < n.size(); ++i) {
    if (!(mse[i] > 0.0) || !std::isfinite(mse[i])) throw NumericError("estimate_rate: mse must be positive and finite");
    const double x = std::log10(static_cast<double>(n[i]));
    const double y = std::log10(mse[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = m * sxx - sx * sx;
  if (!(denom > 0.0)) throw ContractError("estimate_rate: recorded n values are not distinct");
  return (m * sxy - sx * sy) / denom;
}

inline double estimate_rate(const MseCurve& curve) {
  std::vector<std::int64_t> n;
  std::vector<double> mse;
  for (const auto& p : curve.points) {
    n.push_back(p.n);
    mse.push_back(p.mse);
  }
  return estimate_rate(n, mse);
}

/// Per-iteration trace rows: seed,n,variant,T_n,err_l1[,mu...].
class TraceWriter {
 public:
  TraceWriter(std::ostream& out, std::uint64_t seed, Variant variant, std::optional<ProbabilityVector> oracle,
              bool with_mu)
      : out_(out), seed_(seed), variant_(variant), oracle_(std::move(oracle)), with_mu_(with_mu) {}

  static void header(std::ostream& out, Eigen::Index dim, bool with_mu) {
    out << "seed,n,variant,T_n,err_l1";
    if (with_mu) {
      for (Eigen::Index i = 0; i < dim; ++i) out << ",mu_" << i;
    }
    out << '\n';
  }

  void operator()(const EstimatorState& s) const {
    const ProbabilityVector est = current_estimate(s);
    out_ << seed_ << ',' << s.n << ',' << to_string(variant_) << ',' << detail::format_number(s.T) << ','
         << detail::format_number(oracle_ ? l1_distance(est, *oracle_) : std::nan(""));
    if (with_mu_) {
      for (Eigen::Index i = 0; i < est.size(); ++i) out_ << ',' << detail::format_number(est[i]);
    }
    out_ << '\n';
  }

 private:
  std::ostream& out_;
  std::uint64_t seed_;
  Variant variant_;
  std::optional<ProbabilityVector> oracle_;
  bool with_mu_;
};

// ---------------------------------------------------------------------------
// Replicated runs
// ---------------------------------------------------------------------------

namespace detail {

struct ReplicateRecord {
  std::vector<Vector> estimates;
  std::vector<double> T;
  std::string trace;
};

/// Runs body(i) for i in [0, count) on up to `threads` workers.
template <class Body>
void parallel_for(int count, unsigned threads, Body body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  const int workers = static_cast<int>(std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::future<void>> jobs;
  for (int w = 0; w < workers; ++w) {
    jobs.push_back(std::async(std::launch::async, [&] {
      for (int i = next++; i < count; i = next++) body(i);
    }));
  }
  for (auto& j : jobs) j.get();  // rethrows the first failure
}

}  // namespace detail

/// Oracle QSD of the untransformed chain, or nullopt with a warning.
inline std::optional<ProbabilityVector> oracle_qsd(const AnyChain& base, std::vector<std::string>& warnings) {
  const Matrix& q = transient_block(base);
  if (q.rows() > kMaxOracleDim) {
    warnings.push_back("oracle disabled: dimension " + std::to_string(q.rows()) + " exceeds " +
                       std::to_string(kMaxOracleDim));
    return std::nullopt;
  }
  try {
    return principal_left_eigenpair(q, kind_of(base)).vector;
  } catch (const Error& e) {
    warnings.push_back(std::string("oracle disabled: ") + e.what());
    return std::nullopt;
  }
}

/// Runs cfg.replicates independent estimators (seed + i) and averages their
/// recorded estimates. If trace is non-null, every recorded iterate of every
/// replicate is appended to it in replicate order.
inline MseCurve run_experiment(const RunConfig& cfg, std::ostream* trace = nullptr) {
  cfg.validate();
  const AnyChain base = parse_chain(cfg.chain);
  const AnyChain chain = transform_chain(base, cfg.doeblin, cfg.uniformized);
  const Eigen::Index dim = transient_block(chain).rows();
  const ProbabilityVector mu0 = parse_initial_law(cfg.initial, dim);

  MseCurve curve;
  curve.oracle = oracle_qsd(base, curve.warnings);

  RunOptions opts;
  opts.variant = cfg.variant;
  opts.schedule = cfg.schedule;
  opts.n_tours = cfg.n_tours;
  opts.average_from = cfg.averaging_start();
  opts.max_tour_steps = cfg.max_tour_steps;
  opts.record_at = log_spaced_points(cfg.n_tours, cfg.points_per_decade);

  std::vector<detail::ReplicateRecord> records(static_cast<std::size_t>(cfg.replicates));
  detail::parallel_for(cfg.replicates, cfg.threads, [&](int i) {
    auto& rec = records[static_cast<std::size_t>(i)];
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(i);
    Rng rng(seed);
    std::ostringstream trace_text;
    const TraceWriter writer(trace_text, seed, cfg.variant, curve.oracle, cfg.record_mu);
    std::visit(
        [&](const auto& c) {
          run_estimator(c, opts, mu0, rng, [&](const EstimatorState& s) {
            rec.estimates.push_back(current_estimate(s).values());
            rec.T.push_back(s.T);
            if (trace) writer(s);
          });
        },
        chain);
    rec.trace = std::move(trace_text).str();
  });

  if (trace) {
    TraceWriter::header(*trace, dim, cfg.record_mu);
    for (const auto& rec : records) *trace << rec.trace;
  }

  const double reps = static_cast<double>(cfg.replicates);
  for (std::size_t k = 0; k < opts.record_at.size(); ++k) {
    CurvePoint p;
    p.n = opts.record_at[k];
    p.mu = Vector::Zero(dim);
    double mse = 0.0, l1 = 0.0;
    for (const auto& rec : records) {
      const Vector& est = rec.estimates[k];
      p.mu += est;
      p.T += rec.T[k];
      if (curve.oracle) {
        mse += (est - curve.oracle->values()).squaredNorm();
        l1 += (est - curve.oracle->values()).lpNorm<1>();
      }
    }
    p.mu /= reps;
    p.T /= reps;
    if (curve.oracle) {
      p.mse = mse / reps;
      p.err_l1 = l1 / reps;
    }
    curve.points.push_back(std::move(p));
  }

  if (curve.oracle && curve.points.size() >= 10) {
    try {
      curve.slope = estimate_rate(curve);
    } catch (const NumericError& e) {
      curve.warnings.push_back(std::string("slope unavailable: ") + e.what());
    }
  }
  return curve;
}

inline void write_curve_csv(std::ostream& out, const RunConfig& cfg, const MseCurve& curve) {
  out << "# qsdkit v1, seed=" << cfg.seed << ", chain=" << cfg.chain << ", variant=" << to_string(cfg.variant)
      << ", alpha=" << detail::format_number(cfg.schedule.alpha());
  if (cfg.doeblin) out << ", doeblin=" << detail::format_number(*cfg.doeblin);
  if (cfg.uniformized) out << ", uniformized=1";
  out << ", step_c=" << detail::format_number(cfg.schedule.c()) << ", tours=" << cfg.n_tours
      << ", replicates=" << cfg.replicates << ", init=" << cfg.initial << '\n';
  out << "# slope=" << detail::format_number(curve.slope.value_or(std::nan(""))) << '\n';
  for (const auto& w : curve.warnings) out << "# warning: " << w << '\n';
  out << "n,mse_l2sq,err_l1,T_n";
  const Eigen::Index dim = curve.points.empty() ? 0 : curve.points.front().mu.size();
  if (cfg.record_mu) {
    for (Eigen::Index i = 0; i < dim; ++i) out << ",mu_" << i;
  }
  out << '\n';
  for (const auto& p : curve.points) {
    out << p.n << ',' << detail::format_number(p.mse) << ',' << detail::format_number(p.err_l1) << ','
        << detail::format_number(p.T);
    if (cfg.record_mu) {
      for (Eigen::Index i = 0; i < dim; ++i) out << ',' << detail::format_number(p.mu[i]);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Presets for the three reference experiments, at reduced budgets.
// ---------------------------------------------------------------------------

struct Preset {
  std::string name;
  RunConfig config;  // variant is overridden per comparison arm
};

inline Preset make_preset(std::string_view name) {
  Preset p;
  p.name = std::string(name);
  p.config.replicates = 20;
  if (name == "loopy") {
    p.config.chain = "loopy:0.98";
    p.config.n_tours = 1'000'000;
  } else if (name == "mm1") {
    p.config.chain = "mm1:1.25:100";
    p.config.doeblin = 0.95;
    p.config.n_tours = 100'000;
  } else if (name == "contact") {
    // Epidemic started from a single infected node.
    p.config.chain = "contact:100:1.5";
    p.config.doeblin = 0.5;
    p.config.initial = "point:0";
    p.config.n_tours = 100'000;
  } else {
    throw DomainError("unknown preset '" + std::string(name) + "' (expected loopy, mm1 or contact)");
  }
  return p;
}

struct Comparison {
  MseCurve vanilla;
  MseCurve averaged;
  std::optional<CltVerdict> clt;  // absent above the dense spectrum limit

  double final_ratio() const { return vanilla.final_point().mse / averaged.final_point().mse; }
};

inline Comparison run_comparison(RunConfig cfg) {
  Comparison out;
  const AnyChain chain = transform_chain(parse_chain(cfg.chain), cfg.doeblin, cfg.uniformized);
  if (transient_block(chain).rows() <= kMaxSpectrumDim) {
    out.clt = check_clt(full_spectrum(transient_block(chain)), kind_of(chain));
  }
  cfg.variant = Variant::vanilla;
  out.vanilla = run_experiment(cfg);
  cfg.variant = Variant::projected_avg;
  out.averaged = run_experiment(cfg);
  return out;
}

}  // namespace qsdkit
