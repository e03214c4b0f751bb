#pragma once

// Slow, literal re-implementations used as references in the tests. They
// share no code with the library beyond plain arithmetic.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

namespace oracle {

struct Sample {
  std::vector<int> z;
  std::vector<double> y;
  std::vector<std::vector<double>> w;  // w[i] has p entries
  std::size_t n() const { return z.size(); }
};

inline double ind(double a, double b, bool ties) {
  if (ties) {
    if (a < b) return 1.0;
    if (a == b) return 0.5;
    return 0.0;
  }
  return a <= b ? 1.0 : 0.0;
}

inline double Phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
inline double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }
inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double pairs(std::size_t n) { return 0.5 * static_cast<double>(n) * static_cast<double>(n - 1); }

inline double mww(const Sample& s, bool ties) {
  double hits = 0, count = 0;
  for (std::size_t a = 0; a < s.n(); ++a)
    for (std::size_t b = 0; b < s.n(); ++b)
      if (s.z[a] == 1 && s.z[b] == 0) {
        hits += ind(s.y[a], s.y[b], ties);
        count += 1;
      }
  return hits / count;
}

// g[a][b] = model probability that y_a1 <= y_b0
using GMatrix = std::vector<std::vector<double>>;

inline GMatrix probit_g(const Sample& s, const std::vector<double>& gamma, bool constant_only) {
  const std::size_t p = constant_only ? 0 : s.w.empty() ? 0 : s.w[0].size();
  GMatrix g(s.n(), std::vector<double>(s.n()));
  for (std::size_t a = 0; a < s.n(); ++a)
    for (std::size_t b = 0; b < s.n(); ++b) {
      double lp = gamma[0];
      for (std::size_t k = 0; k < p; ++k) lp += gamma[1 + k] * s.w[a][k] + gamma[1 + p + k] * s.w[b][k];
      g[a][b] = Phi(lp);
    }
  return g;
}

inline double ipw(const Sample& s, const std::vector<double>& pi, bool ties, bool hajek) {
  double num = 0, mass = 0;
  for (std::size_t i = 0; i < s.n(); ++i)
    for (std::size_t j = i + 1; j < s.n(); ++j) {
      double wij = s.z[i] * (1 - s.z[j]) / (pi[i] * (1 - pi[j]));
      double wji = s.z[j] * (1 - s.z[i]) / (pi[j] * (1 - pi[i]));
      double t = 0;
      if (wij != 0) t += wij * ind(s.y[i], s.y[j], ties);
      if (wji != 0) t += wji * ind(s.y[j], s.y[i], ties);
      num += 0.5 * t;
      mass += 0.5 * (wij + wji);
    }
  return num / (hajek ? mass : pairs(s.n()));
}

inline double msi(const Sample& s, const GMatrix& g, bool ties) {
  double total = 0;
  for (std::size_t i = 0; i < s.n(); ++i)
    for (std::size_t j = i + 1; j < s.n(); ++j) {
      double a = (s.z[i] == 1 && s.z[j] == 0) ? ind(s.y[i], s.y[j], ties) : g[i][j];
      double b = (s.z[j] == 1 && s.z[i] == 0) ? ind(s.y[j], s.y[i], ties) : g[j][i];
      total += 0.5 * (a + b);
    }
  return total / pairs(s.n());
}

inline double dr(const Sample& s, const std::vector<double>& pi, const GMatrix& g, bool ties,
                 bool hajek) {
  double imputed = 0, resid = 0, mass = 0;
  for (std::size_t i = 0; i < s.n(); ++i)
    for (std::size_t j = i + 1; j < s.n(); ++j) {
      double wij = s.z[i] * (1 - s.z[j]) / (pi[i] * (1 - pi[j]));
      double wji = s.z[j] * (1 - s.z[i]) / (pi[j] * (1 - pi[i]));
      imputed += 0.5 * (g[i][j] + g[j][i]);
      if (wij != 0) resid += 0.5 * wij * (ind(s.y[i], s.y[j], ties) - g[i][j]);
      if (wji != 0) resid += 0.5 * wji * (ind(s.y[j], s.y[i], ties) - g[j][i]);
      mass += 0.5 * (wij + wji);
    }
  return imputed / pairs(s.n()) + resid / (hajek ? mass : pairs(s.n()));
}

/**
 * Estimating function of the full DR system (logistic propensity with
 * intercept + slopes, probit GPI with both slope blocks, uniform delta
 * weights) at theta = (eta, gamma, delta).
 */
inline std::vector<double> dr_ugee_score(const Sample& s, const std::vector<double>& theta,
                                         bool ties) {
  const std::size_t p = s.w[0].size();
  const std::size_t qe = 1 + p, qg = 1 + 2 * p, q = qe + qg + 1;
  std::vector<double> U(q, 0.0);
  auto pi_of = [&](std::size_t i) {
    double lp = theta[0];
    for (std::size_t k = 0; k < p; ++k) lp += theta[1 + k] * s.w[i][k];
    return logistic(lp);
  };
  auto lp_g = [&](std::size_t a, std::size_t b) {
    double lp = theta[qe];
    for (std::size_t k = 0; k < p; ++k)
      lp += theta[qe + 1 + k] * s.w[a][k] + theta[qe + 1 + p + k] * s.w[b][k];
    return lp;
  };
  auto xg = [&](std::size_t a, std::size_t b) {
    std::vector<double> x(qg);
    x[0] = 1;
    for (std::size_t k = 0; k < p; ++k) {
      x[1 + k] = s.w[a][k];
      x[1 + p + k] = s.w[b][k];
    }
    return x;
  };
  const double delta = theta[q - 1];
  for (std::size_t i = 0; i < s.n(); ++i)
    for (std::size_t j = i + 1; j < s.n(); ++j) {
      double pi = pi_of(i), pj = pi_of(j);
      // propensity row
      double f1 = 0.5 * (s.z[i] + s.z[j]);
      double h1 = 0.5 * (pi + pj);
      double V1 = 0.25 * (pi * (1 - pi) + pj * (1 - pj));
      for (std::size_t k = 0; k < qe; ++k) {
        double xi = k == 0 ? 1.0 : s.w[i][k - 1];
        double xj = k == 0 ? 1.0 : s.w[j][k - 1];
        double dh = 0.5 * (pi * (1 - pi) * xi + pj * (1 - pj) * xj);
        U[k] += dh * (f1 - h1) / V1;
      }
      // outcome rows, observed orientation only
      double gij = Phi(lp_g(i, j)), gji = Phi(lp_g(j, i));
      if (s.z[i] == 1 && s.z[j] == 0) {
        auto x = xg(i, j);
        double r = ind(s.y[i], s.y[j], ties);
        for (std::size_t k = 0; k < qg; ++k)
          U[qe + k] += phi(lp_g(i, j)) * x[k] * (r - gij) / (gij * (1 - gij));
      }
      if (s.z[j] == 1 && s.z[i] == 0) {
        auto x = xg(j, i);
        double r = ind(s.y[j], s.y[i], ties);
        for (std::size_t k = 0; k < qg; ++k)
          U[qe + k] += phi(lp_g(j, i)) * x[k] * (r - gji) / (gji * (1 - gji));
      }
      // delta row
      double wij = s.z[i] * (1 - s.z[j]) / (pi * (1 - pj));
      double wji = s.z[j] * (1 - s.z[i]) / (pj * (1 - pi));
      double Iij = wij != 0 ? ind(s.y[i], s.y[j], ties) : 0.0;
      double Iji = wji != 0 ? ind(s.y[j], s.y[i], ties) : 0.0;
      double f3 = 0.5 * (wij * Iij + (1 - wij) * gij) + 0.5 * (wji * Iji + (1 - wji) * gji);
      U[q - 1] += f3 - delta;
    }
  return U;
}

/// Random sample with both arms; y rounded to a coarse grid when `ties`.
inline Sample random_sample(std::mt19937_64& rng, std::size_t n, std::size_t p, bool coarse) {
  std::normal_distribution<double> N(0.0, 1.0);
  Sample s;
  for (;;) {
    s = Sample{};
    int treated = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> w(p);
      for (auto& v : w) v = N(rng);
      double y = N(rng) + (p ? 0.5 * w[0] : 0.0);
      if (coarse) y = std::round(2.0 * y) / 2.0;
      int z = std::bernoulli_distribution(0.5)(rng) ? 1 : 0;
      treated += z;
      s.z.push_back(z);
      s.y.push_back(y);
      s.w.push_back(w);
    }
    if (treated > 0 && treated < static_cast<int>(n)) return s;
  }
}

}  // namespace oracle
