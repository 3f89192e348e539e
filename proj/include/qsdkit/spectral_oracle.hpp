#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/LU>

#include "qsdkit/detail/hessenberg_qr.hpp"
#include "qsdkit/errors.hpp"
#include "qsdkit/markov_models.hpp"
#include "qsdkit/probability_vector.hpp"

namespace qsdkit {

using Complex = std::complex<double>;
using Spectrum = std::vector<Complex>;

inline constexpr Eigen::Index kMaxPowerIterationDim = 2048;
inline constexpr Eigen::Index kMaxSpectrumDim = 512;
inline constexpr Eigen::Index kMaxJacobianDim = 64;

struct PrincipalPair {
  double value;
  ProbabilityVector vector;
};

namespace detail {

inline constexpr double kPowerTolerance = 1e-12;
inline constexpr long kMaxPowerSweeps = 1'000'000;
// Sweeps on Q itself before switching to the lazy matrix (I+Q)/2, which has
// the same eigenvectors and no periodicity.
inline constexpr long kPeriodicProbeSweeps = 20'000;
inline constexpr double kResidualTarget = 1e-11;
inline constexpr double kRealTolerance = 1e-10;
// Relative slack under which a CLT margin counts as the (failing) boundary case.
inline constexpr double kCltBoundaryTolerance = 1e-9;

// Power iteration x' <- x' M / sum, from x. Returns true on convergence.
inline bool power_sweeps(const Matrix& m, Vector& x, long max_sweeps, long& used) {
  Vector y(x.size());
  for (long sweep = 0; sweep < max_sweeps; ++sweep) {
    ++used;
    y.noalias() = m.transpose() * x;
    const double s = y.sum();
    if (!(s > 0.0) || !std::isfinite(s)) throw ConvergenceError("power iteration: iterate lost all mass");
    y /= s;
    const double diff = (y - x).lpNorm<Eigen::Infinity>();
    x.swap(y);
    if (diff < kPowerTolerance) return true;
  }
  return false;
}

inline double left_residual(const Matrix& q, const Vector& x, double lambda) {
  return (q.transpose() * x - lambda * x).lpNorm<Eigen::Infinity>();
}

// A couple of shifted inverse-iteration sweeps, for slowly mixing chains whose
// power iterate stalls just short of the residual target.
inline void polish_left_vector(const Matrix& q, Vector& x, double& lambda) {
  const Eigen::Index d = q.rows();
  for (int sweep = 0; sweep < 3 && left_residual(q, x, lambda) > kResidualTarget; ++sweep) {
    const double shift = lambda + 1e-10 * std::max(1.0, std::abs(lambda));
    Eigen::PartialPivLU<Matrix> lu(q.transpose() - shift * Matrix::Identity(d, d));
    Vector y = lu.solve(x);
    if (!y.allFinite()) return;
    if (y.sum() < 0.0) y = -y;
    y = y.cwiseMax(0.0);
    const double s = y.sum();
    if (!(s > 0.0)) return;
    y /= s;
    const double candidate = (q.transpose() * y).sum();
    if (left_residual(q, y, candidate) < left_residual(q, x, lambda)) {
      x = y;
      lambda = candidate;
    }
  }
}

inline std::size_t principal_index(std::span<const Complex> spectrum) {
  if (spectrum.empty()) throw ContractError("spectrum is empty");
  std::size_t best = 0;
  for (std::size_t i = 1; i < spectrum.size(); ++i) {
    if (spectrum[i].real() > spectrum[best].real()) best = i;
  }
  if (std::abs(spectrum[best].imag()) > kRealTolerance) {
    throw ContractError("principal eigenvalue is not real; the matrix is not a valid transient block");
  }
  return best;
}

inline bool clt_margin_holds(double margin, double scale) {
  return margin > kCltBoundaryTolerance * std::max(1.0, std::abs(scale));
}

// Smallest achievable maximum |a_i - b_pi(i)| over bijections pi.
inline double bottleneck_matching(const Spectrum& a, const Spectrum& b) {
  const std::size_t n = a.size();
  if (n != b.size()) throw ContractError("bottleneck_matching: size mismatch");
  if (n == 0) return 0.0;
  std::vector<double> dist(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) dist[i * n + j] = std::abs(a[i] - b[j]);
  std::vector<double> levels = dist;
  std::sort(levels.begin(), levels.end());

  auto perfect_within = [&](double limit) {
    std::vector<long> match_b(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<char> visited(n, 0);
      // Kuhn's augmenting path.
      auto augment = [&](auto&& self, std::size_t row) -> bool {
        for (std::size_t j = 0; j < n; ++j) {
          if (dist[row * n + j] > limit || visited[j]) continue;
          visited[j] = 1;
          if (match_b[j] < 0 || self(self, static_cast<std::size_t>(match_b[j]))) {
            match_b[j] = static_cast<long>(row);
            return true;
          }
        }
        return false;
      };
      if (!augment(augment, i)) return false;
    }
    return true;
  };

  std::size_t lo = 0, hi = levels.size() - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (perfect_within(levels[mid])) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return levels[lo];
}

}  // namespace detail

/// Normalized principal left eigenvector (the quasi-stationary distribution)
/// and its eigenvalue, by power iteration on Q' (discrete time) or on
/// (cI + Q)' with c = max(-q_ii) + 1 (continuous time).
inline PrincipalPair principal_left_eigenpair(const Matrix& q, ChainKind kind) {
  const Eigen::Index d = q.rows();
  if (d == 0 || q.cols() != d) throw ContractError("principal_left_eigenpair: matrix must be square");
  if (d > kMaxPowerIterationDim) throw ContractError("principal_left_eigenpair: dimension too large");

  double shift = 0.0;
  Matrix m = q;
  if (kind == ChainKind::continuous_time) {
    shift = (-q.diagonal()).maxCoeff() + 1.0;
    m.diagonal().array() += shift;
  }

  Vector x = Vector::Constant(d, 1.0 / static_cast<double>(d));
  long used = 0;
  bool converged = detail::power_sweeps(m, x, std::min(detail::kPeriodicProbeSweeps, detail::kMaxPowerSweeps), used);
  if (!converged) {
    Matrix lazy = 0.5 * (Matrix::Identity(d, d) + m);
    converged = detail::power_sweeps(lazy, x, detail::kMaxPowerSweeps - used, used);
  }
  if (!converged) throw ConvergenceError("principal_left_eigenpair: power iteration did not converge");

  // x sums to one, so sum(x'Q) is the Rayleigh-type eigenvalue estimate.
  double lambda = (q.transpose() * x).sum();
  detail::polish_left_vector(q, x, lambda);
  return {lambda, ProbabilityVector::normalized(x.cwiseMax(0.0))};
}

/// All eigenvalues (with multiplicity) of a real square matrix, sorted by
/// decreasing real part, then decreasing imaginary part.
inline Spectrum full_spectrum(const Matrix& q) {
  const Eigen::Index d = q.rows();
  if (d == 0 || q.cols() != d) throw ContractError("full_spectrum: matrix must be square and non-empty");
  if (d > kMaxSpectrumDim) throw ContractError("full_spectrum: dimension too large");
  if (!q.allFinite()) throw DomainError("full_spectrum: non-finite entries");
  Matrix h = q;
  detail::balance(h);
  detail::reduce_to_hessenberg(h);
  Spectrum s = detail::hessenberg_eigenvalues(h);
  std::sort(s.begin(), s.end(), [](const Complex& a, const Complex& b) {
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });
  return s;
}

struct CltVerdict {
  bool holds;
  double margin;  // +inf when there are no non-principal eigenvalues
};

/// Sufficient condition for a sqrt(n) CLT of the 1/n recursion on a
/// discrete-time chain: Re(1/(1-l)) < (1/2) / (1-l_pv) for every
/// non-principal eigenvalue l. Equality counts as failure.
inline CltVerdict check_clt_dt(std::span<const Complex> spectrum) {
  const std::size_t pv = detail::principal_index(spectrum);
  if (spectrum.size() == 1) return {true, std::numeric_limits<double>::infinity()};
  const double rhs = 0.5 / (1.0 - spectrum[pv].real());
  double lhs = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    if (i != pv) lhs = std::max(lhs, (1.0 / (1.0 - spectrum[i])).real());
  }
  const double margin = rhs - lhs;
  return {detail::clt_margin_holds(margin, rhs), margin};
}

/// Continuous-time analogue: 2 l_pv > Re(l) for every non-principal l.
inline CltVerdict check_clt_ct(std::span<const Complex> spectrum) {
  const std::size_t pv = detail::principal_index(spectrum);
  if (spectrum.size() == 1) return {true, std::numeric_limits<double>::infinity()};
  const double lpv = spectrum[pv].real();
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    if (i != pv) worst = std::max(worst, spectrum[i].real());
  }
  const double margin = 2.0 * lpv - worst;
  return {detail::clt_margin_holds(margin, lpv), margin};
}

inline CltVerdict check_clt(std::span<const Complex> spectrum, ChainKind kind) {
  return kind == ChainKind::discrete_time ? check_clt_dt(spectrum) : check_clt_ct(spectrum);
}

/// Mean ODE field mu'A - (mu'A 1) mu' with A = (I-Q)^{-1} (discrete time) or
/// A = -Q^{-1} (continuous time). Vanishes at the quasi-stationary
/// distribution and always sums to zero.
inline Vector ode_residual(const Matrix& q, const ProbabilityVector& mu, ChainKind kind) {
  const Eigen::Index d = q.rows();
  if (q.cols() != d || mu.size() != d) throw ContractError("ode_residual: dimension mismatch");
  const Matrix m = kind == ChainKind::discrete_time ? Matrix(Matrix::Identity(d, d) - q) : Matrix(-q);
  Eigen::FullPivLU<Matrix> lu(m.transpose());
  if (!lu.isInvertible()) throw ContractError("ode_residual: fundamental matrix is singular");
  const Vector x = lu.solve(mu.values());  // x = A' mu
  return x - x.sum() * mu.values();
}

struct JacobianCheck {
  double max_abs_error;           // bottleneck distance between computed and predicted spectra of J
  Spectrum jacobian_spectrum;     // computed eigenvalues of J
  Spectrum predicted_spectrum;    // {l_B/beta - 1 : non-principal l_B} plus {-1}
  double min_abs_jacobian_eigenvalue;
};

/// Builds the Jacobian J = (1/beta)[B - beta I - mu 1'B] of the reduced mean
/// ODE at the quasi-stationary distribution mu, B = (I-Q')^{-1},
/// beta = 1/(1-l_pv), and compares its spectrum with the one predicted from B.
inline JacobianCheck jacobian_check(const Matrix& q) {
  const Eigen::Index d = q.rows();
  if (d == 0 || q.cols() != d) throw ContractError("jacobian_check: matrix must be square");
  if (d > kMaxJacobianDim) throw ContractError("jacobian_check: dimension too large");

  const Matrix ident = Matrix::Identity(d, d);
  Eigen::FullPivLU<Matrix> lu(ident - q.transpose());
  if (!lu.isInvertible()) throw ContractError("jacobian_check: I - Q is singular");
  const Matrix b = lu.inverse();
  const PrincipalPair pp = principal_left_eigenpair(q, ChainKind::discrete_time);
  const double beta = 1.0 / (1.0 - pp.value);
  const Vector& mu = pp.vector.values();
  const Eigen::RowVectorXd ones_b = b.colwise().sum();
  const Matrix j = (b - beta * ident - mu * ones_b) / beta;

  JacobianCheck out;
  out.jacobian_spectrum = full_spectrum(j);
  const Spectrum spec_b = full_spectrum(b);
  std::size_t principal = 0;
  for (std::size_t i = 1; i < spec_b.size(); ++i) {
    if (std::abs(spec_b[i] - beta) < std::abs(spec_b[principal] - beta)) principal = i;
  }
  for (std::size_t i = 0; i < spec_b.size(); ++i) {
    out.predicted_spectrum.push_back(i == principal ? Complex(-1.0, 0.0) : spec_b[i] / beta - 1.0);
  }
  out.max_abs_error = detail::bottleneck_matching(out.jacobian_spectrum, out.predicted_spectrum);
  out.min_abs_jacobian_eigenvalue = std::numeric_limits<double>::infinity();
  for (const auto& l : out.jacobian_spectrum) {
    out.min_abs_jacobian_eigenvalue = std::min(out.min_abs_jacobian_eigenvalue, std::abs(l));
  }
  return out;
}

/// Ground truth and diagnostics for one chain.
struct SpectralReport {
  ChainKind kind;
  Eigen::Index dim;
  double principal_value;
  ProbabilityVector principal_left_vector;
  double eigen_residual;       // ||d'Q - l d'||_inf
  double expected_lifetime;    // 1/(1-l) or -1/l: the limit of T_n
  Spectrum spectrum;           // empty when dim exceeds kMaxSpectrumDim
  std::optional<CltVerdict> clt;
};

inline SpectralReport spectral_report(const AnyChain& chain) {
  const Matrix& q = transient_block(chain);
  const ChainKind kind = kind_of(chain);
  PrincipalPair pp = principal_left_eigenpair(q, kind);
  SpectralReport r{kind,
                   q.rows(),
                   pp.value,
                   pp.vector,
                   detail::left_residual(q, pp.vector.values(), pp.value),
                   kind == ChainKind::discrete_time ? 1.0 / (1.0 - pp.value) : -1.0 / pp.value,
                   {},
                   std::nullopt};
  if (q.rows() <= kMaxSpectrumDim) {
    r.spectrum = full_spectrum(q);
    r.clt = check_clt(r.spectrum, kind);
  }
  return r;
}

inline std::string format_complex(const Complex& z) {
  char buf[64];
  if (z.imag() == 0.0) {
    std::snprintf(buf, sizeof buf, "%.12g", z.real());
  } else {
    std::snprintf(buf, sizeof buf, "%.12g%+.12gi", z.real(), z.imag());
  }
  return buf;
}

/// key=value lines, one per field; vectors are space-separated.
inline void write_report(std::ostream& out, const SpectralReport& r) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return std::string(buf);
  };
  out << "kind=" << to_string(r.kind) << '\n';
  out << "dim=" << r.dim << '\n';
  out << "principal_value=" << num(r.principal_value) << '\n';
  out << "expected_lifetime=" << num(r.expected_lifetime) << '\n';
  out << "eigen_residual=" << num(r.eigen_residual) << '\n';
  out << "qsd=";
  for (Eigen::Index i = 0; i < r.principal_left_vector.size(); ++i) {
    out << (i ? " " : "") << num(r.principal_left_vector[i]);
  }
  out << '\n';
  if (r.clt) {
    out << "spectrum=";
    for (std::size_t i = 0; i < r.spectrum.size(); ++i) out << (i ? " " : "") << format_complex(r.spectrum[i]);
    out << '\n';
    out << "clt=" << (r.clt->holds ? "holds" : "fails") << '\n';
    out << "clt_margin=" << num(r.clt->margin) << '\n';
  }
}

}  // namespace qsdkit
