#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "qsdkit/errors.hpp"
#include "qsdkit/probability_vector.hpp"

// Dense nonsymmetric eigenvalues: diagonal balancing, Householder reduction to
// upper Hessenberg form, then Francis double-shift QR down to real Schur form
// (1x1 and 2x2 diagonal blocks). Follows the EISPACK balanc/orthes/hqr route,
// eigenvalues only.
namespace qsdkit::detail {

// Similarity by powers of two so that row and column norms are comparable.
inline void balance(Matrix& a) {
  constexpr double radix = 2.0;
  constexpr double sqrdx = radix * radix;
  const Eigen::Index n = a.rows();
  bool done = false;
  while (!done) {
    done = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      double r = 0.0;
      double c = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j != i) {
          c += std::abs(a(j, i));
          r += std::abs(a(i, j));
        }
      }
      if (c == 0.0 || r == 0.0) continue;
      double g = r / radix;
      double f = 1.0;
      const double s = c + r;
      while (c < g) {
        f *= radix;
        c *= sqrdx;
      }
      g = r * radix;
      while (c > g) {
        f /= radix;
        c /= sqrdx;
      }
      if ((c + r) / f < 0.95 * s) {
        done = false;
        a.row(i) /= f;
        a.col(i) *= f;
      }
    }
  }
}

// In-place Householder reduction; entries below the subdiagonal are zeroed.
inline void reduce_to_hessenberg(Matrix& h) {
  const Eigen::Index n = h.rows();
  std::vector<double> ort(static_cast<std::size_t>(n), 0.0);
  for (Eigen::Index m = 1; m + 1 < n; ++m) {
    double scale = 0.0;
    for (Eigen::Index i = m; i < n; ++i) scale += std::abs(h(i, m - 1));
    if (scale == 0.0) continue;

    double hh = 0.0;
    for (Eigen::Index i = n - 1; i >= m; --i) {
      ort[i] = h(i, m - 1) / scale;
      hh += ort[i] * ort[i];
    }
    double g = std::sqrt(hh);
    if (ort[m] > 0.0) g = -g;
    hh -= ort[m] * g;
    ort[m] -= g;

    // H <- (I - u u'/hh) H (I - u u'/hh)
    for (Eigen::Index j = m; j < n; ++j) {
      double f = 0.0;
      for (Eigen::Index i = n - 1; i >= m; --i) f += ort[i] * h(i, j);
      f /= hh;
      for (Eigen::Index i = m; i < n; ++i) h(i, j) -= f * ort[i];
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      double f = 0.0;
      for (Eigen::Index j = n - 1; j >= m; --j) f += ort[j] * h(i, j);
      f /= hh;
      for (Eigen::Index j = m; j < n; ++j) h(i, j) -= f * ort[j];
    }
    h(m, m - 1) = scale * g;
    for (Eigen::Index i = m + 1; i < n; ++i) h(i, m - 1) = 0.0;
  }
}

// Eigenvalues of an upper Hessenberg matrix (destroyed).
inline std::vector<std::complex<double>> hessenberg_eigenvalues(Matrix& h, int max_iter_per_root = 200) {
  const Eigen::Index nn = h.rows();
  std::vector<double> wr(static_cast<std::size_t>(nn), 0.0);
  std::vector<double> wi(static_cast<std::size_t>(nn), 0.0);
  const double eps = std::numeric_limits<double>::epsilon();

  double norm = 0.0;
  for (Eigen::Index i = 0; i < nn; ++i) {
    for (Eigen::Index j = std::max<Eigen::Index>(i - 1, 0); j < nn; ++j) norm += std::abs(h(i, j));
  }

  Eigen::Index n = nn - 1;
  double exshift = 0.0;
  double p = 0, q = 0, r = 0, s = 0, z = 0, w = 0, x = 0, y = 0;
  int iter = 0;

  while (n >= 0) {
    // Find the lowest negligible subdiagonal entry.
    Eigen::Index l = n;
    while (l > 0) {
      s = std::abs(h(l - 1, l - 1)) + std::abs(h(l, l));
      if (s == 0.0) s = norm;
      if (std::abs(h(l, l - 1)) < eps * s) break;
      --l;
    }

    if (l == n) {
      // 1x1 block.
      wr[n] = h(n, n) + exshift;
      wi[n] = 0.0;
      --n;
      iter = 0;
    } else if (l == n - 1) {
      // 2x2 block: real pair or complex conjugates.
      w = h(n, n - 1) * h(n - 1, n);
      p = (h(n - 1, n - 1) - h(n, n)) / 2.0;
      q = p * p + w;
      z = std::sqrt(std::abs(q));
      x = h(n, n) + exshift;
      if (q >= 0.0) {
        z = (p >= 0.0) ? p + z : p - z;
        wr[n - 1] = x + z;
        wr[n] = (z != 0.0) ? x - w / z : wr[n - 1];
        wi[n - 1] = 0.0;
        wi[n] = 0.0;
      } else {
        wr[n - 1] = x + p;
        wr[n] = x + p;
        wi[n - 1] = z;
        wi[n] = -z;
      }
      n -= 2;
      iter = 0;
    } else {
      if (++iter > max_iter_per_root) {
        throw ConvergenceError("full_spectrum: QR iteration did not converge");
      }
      x = h(n, n);
      y = h(n - 1, n - 1);
      w = h(n, n - 1) * h(n - 1, n);

      // Exceptional shifts to break cycles.
      if (iter == 10) {
        exshift += x;
        for (Eigen::Index i = 0; i <= n; ++i) h(i, i) -= x;
        s = std::abs(h(n, n - 1)) + std::abs(h(n - 1, n - 2));
        x = y = 0.75 * s;
        w = -0.4375 * s * s;
      }
      if (iter == 30) {
        s = (y - x) / 2.0;
        s = s * s + w;
        if (s > 0.0) {
          s = std::sqrt(s);
          if (y < x) s = -s;
          s = x - w / ((y - x) / 2.0 + s);
          for (Eigen::Index i = 0; i <= n; ++i) h(i, i) -= s;
          exshift += s;
          x = y = w = 0.964;
        }
      }

      // Look for two consecutive small subdiagonal entries.
      Eigen::Index m = n - 2;
      while (m >= l) {
        z = h(m, m);
        r = x - z;
        s = y - z;
        p = (r * s - w) / h(m + 1, m) + h(m, m + 1);
        q = h(m + 1, m + 1) - z - r - s;
        r = h(m + 2, m + 1);
        s = std::abs(p) + std::abs(q) + std::abs(r);
        p /= s;
        q /= s;
        r /= s;
        if (m == l) break;
        if (std::abs(h(m, m - 1)) * (std::abs(q) + std::abs(r)) <
            eps * (std::abs(p) * (std::abs(h(m - 1, m - 1)) + std::abs(z) + std::abs(h(m + 1, m + 1))))) {
          break;
        }
        --m;
      }
      for (Eigen::Index i = m + 2; i <= n; ++i) {
        h(i, i - 2) = 0.0;
        if (i > m + 2) h(i, i - 3) = 0.0;
      }

      // Double QR step on rows l..n and columns m..n.
      for (Eigen::Index k = m; k <= n - 1; ++k) {
        const bool notlast = (k != n - 1);
        if (k != m) {
          p = h(k, k - 1);
          q = h(k + 1, k - 1);
          r = notlast ? h(k + 2, k - 1) : 0.0;
          x = std::abs(p) + std::abs(q) + std::abs(r);
          if (x == 0.0) continue;
          p /= x;
          q /= x;
          r /= x;
        }
        s = std::sqrt(p * p + q * q + r * r);
        if (p < 0.0) s = -s;
        if (s == 0.0) continue;
        if (k != m) {
          h(k, k - 1) = -s * x;
        } else if (l != m) {
          h(k, k - 1) = -h(k, k - 1);
        }
        p += s;
        x = p / s;
        y = q / s;
        z = r / s;
        q /= p;
        r /= p;

        for (Eigen::Index j = k; j < nn; ++j) {
          p = h(k, j) + q * h(k + 1, j);
          if (notlast) {
            p += r * h(k + 2, j);
            h(k + 2, j) -= p * z;
          }
          h(k, j) -= p * x;
          h(k + 1, j) -= p * y;
        }
        for (Eigen::Index i = 0; i <= std::min(n, k + 3); ++i) {
          p = x * h(i, k) + y * h(i, k + 1);
          if (notlast) {
            p += z * h(i, k + 2);
            h(i, k + 2) -= p * r;
          }
          h(i, k) -= p;
          h(i, k + 1) -= p * q;
        }
      }
    }
  }

  std::vector<std::complex<double>> out;
  out.reserve(static_cast<std::size_t>(nn));
  for (Eigen::Index i = 0; i < nn; ++i) out.emplace_back(wr[i], wi[i]);
  return out;
}

}  // namespace qsdkit::detail
