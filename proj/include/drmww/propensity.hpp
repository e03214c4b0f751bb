#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "drmww/core_math.hpp"
#include "drmww/data.hpp"
#include "drmww/errors.hpp"

namespace drmww {

inline constexpr double kDefaultClipEps = 1e-6;

struct PropensitySpec {
  bool intercept_only = false;
  double tol = 1e-8;
  double step_tol = 1e-10;
  int max_iter = 100;
  /// Optional covariate names used in separation messages.
  std::vector<std::string> covariate_names;
};

/// Logistic propensity model pi(w) = expit(eta0 + eta1' w).
struct PropensityModel {
  Eigen::VectorXd eta;
  bool intercept_only = false;
  bool converged = false;
  int iterations = 0;
  double score_norm = 0.0;
  double clip_eps = kDefaultClipEps;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(eta.size()); }

  double linear_predictor(std::span<const double> w) const {
    double eta_w = eta[0];
    if (!intercept_only) {
      if (w.size() + 1 != dim())
        throw DomainError("predict_pi: covariate dimension " +
                          std::to_string(w.size()) + " does not match model (" +
                          std::to_string(dim() - 1) + ")");
      for (std::size_t k = 0; k < w.size(); ++k) eta_w += eta[k + 1] * w[k];
    }
    return eta_w;
  }
};

inline double clip_propensity(double p, double clip_eps) noexcept {
  if (p < clip_eps) return clip_eps;
  if (p > 1.0 - clip_eps) return 1.0 - clip_eps;
  return p;
}

/// expit(eta . (1, w)) clipped to [clip_eps, 1 - clip_eps].
inline double predict_pi(const PropensityModel& model, std::span<const double> w) {
  return clip_propensity(expit(model.linear_predictor(w)), model.clip_eps);
}

namespace detail {

inline Eigen::MatrixXd propensity_design(const Dataset& data, bool intercept_only) {
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto cols =
      intercept_only ? 1 : static_cast<Eigen::Index>(data.covariate_dim() + 1);
  Eigen::MatrixXd x(n, cols);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (Eigen::Index k = 1; k < cols; ++k)
      x(i, k) = data[static_cast<std::size_t>(i)].w[static_cast<std::size_t>(k - 1)];
  }
  return x;
}

inline double logistic_loglik(const Eigen::VectorXd& lp, const Eigen::VectorXd& z) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < lp.size(); ++i) {
    double t = lp[i];
    // log(1 + e^t) without overflow
    double log1pexp = t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    ll += z[i] * t - log1pexp;
  }
  return ll;
}

}  // namespace detail

/**
 * Maximum-likelihood logistic fit by IRLS with step halving.
 *
 * Starts from intercept = logit(mean z), slopes 0. Converges when the
 * largest score component is <= tol or the relative step is <= step_tol.
 */
inline PropensityModel fit_propensity(const Dataset& data,
                                      const PropensitySpec& spec = {}) {
  require_both_arms(data, "fit_propensity");
  const Eigen::MatrixXd x = detail::propensity_design(data, spec.intercept_only);
  const auto n = x.rows();
  const auto q = x.cols();
  if (n < q)
    throw EstimabilityError("fit_propensity: fewer subjects than coefficients");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < q)
    throw EstimabilityError("fit_propensity: singular design (rank " +
                            std::to_string(qr.rank()) + " < " +
                            std::to_string(q) + ")");

  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = data[static_cast<std::size_t>(i)].z;

  PropensityModel model;
  model.intercept_only = spec.intercept_only;
  model.eta = Eigen::VectorXd::Zero(q);
  double zbar = z.mean();
  model.eta[0] = std::log(zbar / (1.0 - zbar));

  Eigen::VectorXd lp = x * model.eta;
  double ll = detail::logistic_loglik(lp, z);
  Eigen::VectorXd mu(n), wts(n), score(q);
  for (int iter = 1; iter <= spec.max_iter; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = expit(lp[i]);
      wts[i] = mu[i] * (1.0 - mu[i]);
    }
    score = x.transpose() * (z - mu);
    model.iterations = iter - 1;
    model.score_norm = score.cwiseAbs().maxCoeff();
    if (model.score_norm <= spec.tol) {
      model.converged = true;
      break;
    }
    Eigen::MatrixXd info = x.transpose() * wts.asDiagonal() * x;
    Eigen::VectorXd step = info.ldlt().solve(score);
    double scale = 1.0;
    Eigen::VectorXd trial = model.eta + step;
    Eigen::VectorXd trial_lp = x * trial;
    double trial_ll = detail::logistic_loglik(trial_lp, z);
    while (trial_ll < ll - 1e-12 * std::abs(ll) && scale > 1e-6) {
      scale *= 0.5;
      trial = model.eta + scale * step;
      trial_lp = x * trial;
      trial_ll = detail::logistic_loglik(trial_lp, z);
    }
    double rel_step = (scale * step).norm() / (model.eta.norm() + 1e-8);
    model.eta = trial;
    lp = trial_lp;
    ll = trial_ll;
    model.iterations = iter;
    if (rel_step <= spec.step_tol) {
      for (Eigen::Index i = 0; i < n; ++i) mu[i] = expit(lp[i]);
      model.score_norm = (x.transpose() * (z - mu)).cwiseAbs().maxCoeff();
      model.converged = true;
      break;
    }
  }

  // Saturated fitted probabilities (|lp| > 15, pi < 3e-7) mean the data are
  // (quasi-)separated even when the score has numerically vanished.
  Eigen::Index worst = 0;
  double biggest = model.eta.cwiseAbs().maxCoeff(&worst);
  if (q > 1) {
    model.eta.tail(q - 1).cwiseAbs().maxCoeff(&worst);
    ++worst;
  }
  bool saturated = lp.cwiseAbs().maxCoeff() > 15.0;
  if (saturated || (!model.converged && biggest > 30.0)) {
    std::string name;
    if (worst == 0)
      name = "intercept";
    else if (static_cast<std::size_t>(worst - 1) < spec.covariate_names.size())
      name = spec.covariate_names[static_cast<std::size_t>(worst - 1)];
    else
      name = "covariate " + std::to_string(worst);
    throw EstimabilityError("fit_propensity: separation detected on " + name +
                            " (|eta| = " + std::to_string(std::abs(model.eta[worst])) + ")");
  }
  if (!model.converged)
    throw ConvergenceError(
        "fit_propensity: no convergence after " + std::to_string(spec.max_iter) +
            " iterations",
        std::vector<double>(model.eta.data(), model.eta.data() + model.eta.size()),
        model.score_norm);
  return model;
}

}  // namespace drmww
