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

enum class Link { probit, logit };

inline const char* to_string(Link link) {
  return link == Link::probit ? "probit" : "logit";
}

/// Inverse link and its derivative at a linear predictor value.
inline double inverse_link(Link link, double x) {
  return link == Link::probit ? std_normal_cdf(x) : expit(x);
}

inline double inverse_link_derivative(Link link, double x) {
  return link == Link::probit ? std_normal_pdf(x) : expit_derivative(x);
}

/// Pairwise kernel: I(a <= b), or I(a < b) + 0.5 I(a == b) with ties.
inline double kernel(double y_a, double y_b, bool ties) noexcept {
  if (ties) return y_a < y_b ? 1.0 : (y_a == y_b ? 0.5 : 0.0);
  return y_a <= y_b ? 1.0 : 0.0;
}

/**
 * Generalized probability index model for P(y_a1 <= y_b0 | w_a, w_b):
 *
 *     g(w_a, w_b) = link^-1(gamma0 + gamma11' w_a + gamma10' w_b)
 *
 * `gamma` is stacked as (gamma0, gamma11, gamma10), or just (gamma0) for the
 * constant-only model. The complementary orientation is g(w_b, w_a).
 */
struct GpiModel {
  Eigen::VectorXd gamma;
  Link link = Link::probit;
  bool constant_only = false;
  bool converged = false;
  int iterations = 0;
  double score_norm = 0.0;

  std::size_t covariate_dim() const noexcept {
    return constant_only ? 0 : static_cast<std::size_t>((gamma.size() - 1) / 2);
  }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(gamma.size()); }

  double gamma0() const { return gamma[0]; }

  /// gamma11' w (first-argument contribution).
  double first_part(std::span<const double> w) const {
    if (constant_only) return 0.0;
    check_dim(w);
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) s += gamma[1 + k] * w[k];
    return s;
  }

  /// gamma10' w (second-argument contribution).
  double second_part(std::span<const double> w) const {
    if (constant_only) return 0.0;
    check_dim(w);
    const std::size_t p = w.size();
    double s = 0.0;
    for (std::size_t k = 0; k < p; ++k) s += gamma[1 + p + k] * w[k];
    return s;
  }

  double linear_predictor(std::span<const double> w_first,
                          std::span<const double> w_second) const {
    return gamma[0] + first_part(w_first) + second_part(w_second);
  }

 private:
  void check_dim(std::span<const double> w) const {
    if (2 * w.size() + 1 != dim())
      throw DomainError("gpi: covariate dimension " + std::to_string(w.size()) +
                        " does not match model");
  }
};

inline double g_value(const GpiModel& model, std::span<const double> w_first,
                      std::span<const double> w_second) {
  return inverse_link(model.link, model.linear_predictor(w_first, w_second));
}

struct GpiSpec {
  Link link = Link::probit;
  bool constant_only = false;
  /// Use the half-tie kernel. Count outcomes force it on.
  bool ties = false;
  double tol = 1e-8;
  int max_iter = 100;
};

inline bool use_ties(const Dataset& data, bool requested) noexcept {
  return requested || data.outcome_kind() == OutcomeKind::count;
}

/**
 * Fits gamma on the observed discordant pairs (treated t, control c):
 *
 *     sum_{t,c} d_tc / (g_tc (1 - g_tc)) * (I(y_t <= y_c) - g_tc) = 0,
 *
 * with g_tc = g(w_t, w_c) and d_tc its gradient in gamma. Fisher scoring with
 * step halving on the Bernoulli quasi-likelihood.
 */
inline GpiModel fit_gpi(const Dataset& data, const GpiSpec& spec = {}) {
  require_both_arms(data, "fit_gpi");
  const bool ties = use_ties(data, spec.ties);
  const std::size_t p = spec.constant_only ? 0 : data.covariate_dim();
  const std::size_t q = 1 + 2 * p;

  std::vector<std::size_t> treated, control;
  for (std::size_t k = 0; k < data.size(); ++k)
    (data[k].z == 1 ? treated : control).push_back(k);

  // Indicators, row-major over (treated, control).
  std::vector<double> ind(treated.size() * control.size());
  double ind_sum = 0.0;
  for (std::size_t a = 0; a < treated.size(); ++a)
    for (std::size_t b = 0; b < control.size(); ++b) {
      double v = kernel(data[treated[a]].y, data[control[b]].y, ties);
      ind[a * control.size() + b] = v;
      ind_sum += v;
    }
  if (ind_sum == 0.0 || ind_sum == static_cast<double>(ind.size()))
    throw EstimabilityError(
        "fit_gpi: all observed pair indicators equal " +
        std::string(ind_sum == 0.0 ? "0" : "1") +
        "; gamma is not identifiable (separation)");

  GpiModel model;
  model.link = spec.link;
  model.constant_only = spec.constant_only;
  model.gamma = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(q));

  const double ind_mean = ind_sum / static_cast<double>(ind.size());
  // Start the intercept at the constant-model solution.
  {
    double lo = -8.0, hi = 8.0;
    for (int k = 0; k < 200; ++k) {
      double mid = 0.5 * (lo + hi);
      (inverse_link(spec.link, mid) < ind_mean ? lo : hi) = mid;
    }
    model.gamma[0] = 0.5 * (lo + hi);
  }

  std::vector<double> first(treated.size()), second(control.size());
  Eigen::VectorXd score(static_cast<Eigen::Index>(q));
  Eigen::MatrixXd info(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q));
  std::vector<double> x(q), d(q);
  std::vector<CompensatedSum> score_acc(q);

  auto design = [&](std::size_t t, std::size_t c) {
    x[0] = 1.0;
    for (std::size_t k = 0; k < p; ++k) {
      x[1 + k] = data[t].w[k];
      x[1 + p + k] = data[c].w[k];
    }
  };

  // Score, information and quasi-log-likelihood at `gamma`.
  auto evaluate = [&](const Eigen::VectorXd& gamma, bool with_info) {
    GpiModel probe = model;
    probe.gamma = gamma;
    for (std::size_t a = 0; a < treated.size(); ++a)
      first[a] = probe.first_part(data[treated[a]].w);
    for (std::size_t b = 0; b < control.size(); ++b)
      second[b] = probe.second_part(data[control[b]].w);
    for (auto& acc : score_acc) acc = CompensatedSum{};
    if (with_info) info.setZero();
    double loglik = 0.0;
    for (std::size_t a = 0; a < treated.size(); ++a)
      for (std::size_t b = 0; b < control.size(); ++b) {
        double lp = gamma[0] + first[a] + second[b];
        double g = inverse_link(spec.link, lp);
        double dg = inverse_link_derivative(spec.link, lp);
        double v = g * (1.0 - g);
        double r = ind[a * control.size() + b];
        loglik += r * std::log(g) + (1.0 - r) * std::log1p(-g);
        design(treated[a], control[b]);
        double coef = dg * (r - g) / v;
        for (std::size_t k = 0; k < q; ++k) {
          d[k] = dg * x[k];
          score_acc[k].add(coef * x[k]);
        }
        if (with_info)
          for (std::size_t k = 0; k < q; ++k)
            for (std::size_t l = 0; l <= k; ++l)
              info(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) +=
                  d[k] * d[l] / v;
      }
    for (std::size_t k = 0; k < q; ++k)
      score[static_cast<Eigen::Index>(k)] = score_acc[k].value();
    if (with_info) info = info.selfadjointView<Eigen::Lower>();
    return loglik;
  };

  double loglik = evaluate(model.gamma, true);
  for (int iter = 1; iter <= spec.max_iter; ++iter) {
    model.score_norm = score.cwiseAbs().maxCoeff();
    if (model.score_norm <= spec.tol) {
      model.converged = true;
      break;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-14 * ldlt.vectorD().maxCoeff())
      throw EstimabilityError("fit_gpi: singular information matrix (design not identifiable)");
    const Eigen::VectorXd step = ldlt.solve(score);
    const Eigen::VectorXd start = model.gamma;
    double scale = 1.0;
    Eigen::VectorXd trial = start + step;
    double trial_ll = evaluate(trial, true);
    while (!(trial_ll >= loglik - 1e-12 * std::abs(loglik)) && scale > 1e-6) {
      scale *= 0.5;
      trial = start + scale * step;
      trial_ll = evaluate(trial, true);
    }
    double rel_step = (scale * step).norm() / (start.norm() + 1.0);
    model.gamma = trial;
    model.iterations = iter;
    loglik = trial_ll;
    model.score_norm = score.cwiseAbs().maxCoeff();
    // Floating-point floor for sums over many pairs.
    if (rel_step <= 1e-13 &&
        model.score_norm <= 1e-12 * static_cast<double>(ind.size())) {
      model.converged = true;
      break;
    }
  }
  model.score_norm = score.cwiseAbs().maxCoeff();
  if (model.score_norm <= spec.tol) model.converged = true;

  if (model.gamma.cwiseAbs().maxCoeff() > 30.0)
    throw EstimabilityError("fit_gpi: coefficients diverging (|gamma| > 30); "
                            "probable separation");
  if (!model.converged)
    throw ConvergenceError(
        "fit_gpi: no convergence after " + std::to_string(spec.max_iter) +
            " iterations",
        std::vector<double>(model.gamma.data(), model.gamma.data() + model.gamma.size()),
        model.score_norm);
  return model;
}

}  // namespace drmww
