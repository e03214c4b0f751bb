#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drmww/core_math.hpp"
#include "drmww/data.hpp"
#include "drmww/errors.hpp"
#include "drmww/estimators.hpp"
#include "drmww/gpi.hpp"
#include "drmww/propensity.hpp"

namespace drmww {

/// Which causal estimator the joint functional response system targets.
enum class FrmFamily { ipw, msi, dr };

inline const char* to_string(FrmFamily f) {
  switch (f) {
    case FrmFamily::ipw: return "IPW";
    case FrmFamily::msi: return "MSI";
    case FrmFamily::dr: return "DR";
  }
  return "?";
}

/// Weighting of the delta equation. `uniform` reproduces the plain pair
/// average of f3; `working_variance` weights each pair by 1/V3 (DR only).
enum class DeltaWeighting { uniform, working_variance };

struct FrmSpec {
  FrmFamily family = FrmFamily::dr;
  bool propensity_intercept_only = false;
  bool gpi_constant_only = false;
  Link link = Link::probit;
  bool ties = false;
  double clip_eps = kDefaultClipEps;
  DeltaWeighting delta_weighting = DeltaWeighting::uniform;
  double tol = 1e-8;
  int max_iter = 100;
  bool check_derivatives = true;
  int derivative_check_pairs = 12;
  double derivative_check_tol = 1e-5;
  std::vector<std::string> covariate_names;

  bool has_eta() const noexcept { return family != FrmFamily::msi; }
  bool has_gamma() const noexcept { return family != FrmFamily::ipw; }
};

/// Offsets of the (eta, gamma, delta) blocks inside the stacked theta.
struct ThetaLayout {
  std::size_t eta_offset = 0, eta_dim = 0;
  std::size_t gamma_offset = 0, gamma_dim = 0;
  std::size_t delta_index = 0;
  std::size_t q = 0;

  static ThetaLayout make(const FrmSpec& spec, std::size_t p) {
    ThetaLayout l;
    std::size_t at = 0;
    if (spec.has_eta()) {
      l.eta_offset = at;
      l.eta_dim = spec.propensity_intercept_only ? 1 : 1 + p;
      at += l.eta_dim;
    }
    if (spec.has_gamma()) {
      l.gamma_offset = at;
      l.gamma_dim = spec.gpi_constant_only ? 1 : 1 + 2 * p;
      at += l.gamma_dim;
    }
    l.delta_index = at;
    l.q = at + 1;
    return l;
  }
};

inline std::vector<std::string> parameter_names(const FrmSpec& spec, std::size_t p) {
  auto layout = ThetaLayout::make(spec, p);
  auto cov = [&](std::size_t k) {
    return k < spec.covariate_names.size() ? spec.covariate_names[k]
                                           : "w" + std::to_string(k + 1);
  };
  std::vector<std::string> names;
  if (layout.eta_dim) {
    names.emplace_back("eta0");
    for (std::size_t k = 0; k + 1 < layout.eta_dim; ++k) names.push_back("eta1_" + cov(k));
  }
  if (layout.gamma_dim) {
    names.emplace_back("gamma0");
    const std::size_t pg = (layout.gamma_dim - 1) / 2;
    for (std::size_t k = 0; k < pg; ++k) names.push_back("gamma11_" + cov(k));
    for (std::size_t k = 0; k < pg; ++k) names.push_back("gamma10_" + cov(k));
  }
  names.emplace_back("delta");
  return names;
}

/**
 * Functional response of one pair at a given theta.
 *
 * f2 has one component per orientation; only the orientation with a treated
 * first member and a control second member is observed. V1, V2, V3 are the
 * diagonal working variances.
 */
struct PairResponse {
  double f1 = 0, h1 = 0;
  std::array<bool, 2> f2_observed{};
  std::array<double, 2> f2{};  // (I(y_i1 <= y_j0), I(y_j1 <= y_i0)); 0 when unobserved
  std::array<double, 2> h2{};  // (g_ij, g_ji)
  double f3 = 0, h3 = 0;
  double V1 = 0, V2 = 0, V3 = 0;
  bool clipped = false;
};

/**
 * Pairwise estimating-equation system for a dataset and spec.
 *
 * `set_theta` caches per-subject propensities and linear-predictor parts;
 * pair-level quantities are then O(q) each.
 */
class FrmSystem {
 public:
  FrmSystem(const Dataset& data, FrmSpec spec)
      : data_(data), spec_(std::move(spec)),
        layout_(ThetaLayout::make(spec_, data.covariate_dim())),
        p_(data.covariate_dim()),
        ties_(use_ties(data, spec_.ties)) {
    const std::size_t n = data_.size();
    pi_.resize(n);
    dpi_.resize(n);
    first_.resize(n);
    second_.resize(n);
    df3_.resize(layout_.q);
    u_.resize(layout_.q);
    xij_.resize(layout_.gamma_dim);
    xji_.resize(layout_.gamma_dim);
  }

  const ThetaLayout& layout() const noexcept { return layout_; }
  const FrmSpec& spec() const noexcept { return spec_; }
  const Dataset& data() const noexcept { return data_; }
  std::size_t q() const noexcept { return layout_.q; }
  const Eigen::VectorXd& theta() const noexcept { return theta_; }

  void set_theta(const Eigen::VectorXd& theta) {
    if (static_cast<std::size_t>(theta.size()) != layout_.q)
      throw DomainError("theta has dimension " + std::to_string(theta.size()) +
                        ", expected " + std::to_string(layout_.q));
    theta_ = theta;
    clipped_ = 0;
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const auto& w = data_[i].w;
      if (layout_.eta_dim) {
        double lp = theta_[eta(0)];
        for (std::size_t k = 0; k + 1 < layout_.eta_dim; ++k) lp += theta_[eta(k + 1)] * w[k];
        double raw = expit(lp);
        double clipped = clip_propensity(raw, spec_.clip_eps);
        pi_[i] = clipped;
        dpi_[i] = clipped == raw ? raw * (1.0 - raw) : 0.0;
        if (clipped != raw) ++clipped_;
      } else {
        pi_[i] = 0.5;
        dpi_[i] = 0.0;
      }
      if (layout_.gamma_dim) {
        double a = theta_[gam(0)], b = 0.0;
        if (!spec_.gpi_constant_only)
          for (std::size_t k = 0; k < p_; ++k) {
            a += theta_[gam(1 + k)] * w[k];
            b += theta_[gam(1 + p_ + k)] * w[k];
          }
        first_[i] = a;
        second_[i] = b;
      }
    }
  }

  std::size_t clipped_count() const noexcept { return clipped_; }
  double propensity(std::size_t i) const { return pi_[i]; }

  PairResponse response(std::size_t i, std::size_t j) const {
    PairResponse r;
    const auto& si = data_[i];
    const auto& sj = data_[j];
    const double pi_i = pi_[i], pi_j = pi_[j];
    double g_ij = 0.5, g_ji = 0.5;
    if (layout_.gamma_dim) {
      g_ij = inverse_link(spec_.link, first_[i] + second_[j]);
      g_ji = inverse_link(spec_.link, first_[j] + second_[i]);
    }
    r.f1 = 0.5 * (si.z + sj.z);
    r.h1 = 0.5 * (pi_i + pi_j);
    r.V1 = 0.25 * (pi_i * (1 - pi_i) + pi_j * (1 - pi_j));
    r.f2_observed = {si.z == 1 && sj.z == 0, sj.z == 1 && si.z == 0};
    if (r.f2_observed[0]) r.f2[0] = kernel(si.y, sj.y, ties_);
    if (r.f2_observed[1]) r.f2[1] = kernel(sj.y, si.y, ties_);
    r.h2 = {g_ij, g_ji};
    r.V2 = 0.25 * (g_ij * (1 - g_ij) + g_ji * (1 - g_ji));
    PairInputs in{si.z, sj.z, pi_i, pi_j, g_ij, g_ji, r.f2[0], r.f2[1]};
    auto t = pair_terms(in);
    r.f3 = spec_.family == FrmFamily::ipw   ? t.ipw
           : spec_.family == FrmFamily::msi ? t.msi
                                            : t.dr;
    r.h3 = theta_[layout_.delta_index];
    r.V3 = 0.25 * (g_ij * (1 - g_ij) / (pi_i * (1 - pi_j)) +
                   g_ji * (1 - g_ji) / (pi_j * (1 - pi_i)));
    if (layout_.eta_dim) r.clipped = at_clip_bound(pi_i) || at_clip_bound(pi_j);
    return r;
  }

  /// Weight of the delta equation for a pair.
  double delta_weight(const PairResponse& r) const {
    if (spec_.delta_weighting == DeltaWeighting::working_variance &&
        spec_.family == FrmFamily::dr)
      return 1.0 / r.V3;
    return 1.0;
  }

  /**
   * Stacked residual S = f - h for one pair: the f1 row (when eta is
   * present), one row per observed f2 orientation (when gamma is present),
   * then the f3 row. Rows for unobserved indicators are dropped.
   */
  Eigen::VectorXd pair_residual(std::size_t i, std::size_t j) const {
    auto r = response(i, j);
    std::vector<double> s;
    if (layout_.eta_dim) s.push_back(r.f1 - r.h1);
    if (layout_.gamma_dim)
      for (int o = 0; o < 2; ++o)
        if (r.f2_observed[o]) s.push_back(r.f2[o] - r.h2[o]);
    s.push_back(r.f3 - r.h3);
    return Eigen::Map<Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
  }

  /// Analytic dS/dtheta' for the rows of pair_residual.
  Eigen::MatrixXd pair_residual_jacobian(std::size_t i, std::size_t j) {
    auto r = response(i, j);
    const auto q = static_cast<Eigen::Index>(layout_.q);
    std::vector<Eigen::VectorXd> rows;
    compute_pair_derivatives(i, j, r);
    if (layout_.eta_dim) rows.push_back(-Eigen::Map<Eigen::VectorXd>(dh1_.data(), q));
    if (layout_.gamma_dim)
      for (int o = 0; o < 2; ++o)
        if (r.f2_observed[o])
          rows.push_back(-Eigen::Map<Eigen::VectorXd>(o == 0 ? dgij_.data() : dgji_.data(), q));
    Eigen::VectorXd last = Eigen::Map<Eigen::VectorXd>(df3_.data(), q);
    last[static_cast<Eigen::Index>(layout_.delta_index)] -= 1.0;
    rows.push_back(last);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), q);
    for (std::size_t k = 0; k < rows.size(); ++k) m.row(static_cast<Eigen::Index>(k)) = rows[k];
    return m;
  }

  /**
   * Accumulates the system at the current theta.
   *
   * score: U = sum_pairs D V^-1 S (compensated). jacobian, when non-null:
   * sum_pairs D V^-1 M'. projections, when non-null: row i gets the sum of
   * U_ij over partners j.
   */
  void accumulate(Eigen::VectorXd& score, Eigen::MatrixXd* jacobian,
                  Eigen::MatrixXd* projections) {
    const std::size_t n = data_.size();
    const std::size_t q = layout_.q;
    std::vector<CompensatedSum> acc(q);
    if (jacobian) jacobian->setZero(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q));
    if (projections) projections->setZero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q));
    for (std::size_t i = 0; i + 1 < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        pair_contribution(i, j, jacobian);
        for (std::size_t k = 0; k < q; ++k) acc[k].add(u_[k]);
        if (projections)
          for (std::size_t k = 0; k < q; ++k) {
            (*projections)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) += u_[k];
            (*projections)(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) += u_[k];
          }
      }
    score.resize(static_cast<Eigen::Index>(q));
    for (std::size_t k = 0; k < q; ++k) score[static_cast<Eigen::Index>(k)] = acc[k].value();
  }

  /// U_ij at the current theta (for tests and brute-force comparisons).
  Eigen::VectorXd pair_score(std::size_t i, std::size_t j) {
    pair_contribution(i, j, nullptr);
    return Eigen::Map<Eigen::VectorXd>(u_.data(), static_cast<Eigen::Index>(layout_.q));
  }

 private:
  std::size_t eta(std::size_t k) const { return layout_.eta_offset + k; }
  bool at_clip_bound(double p) const {
    return p <= spec_.clip_eps || p >= 1.0 - spec_.clip_eps;
  }
  std::size_t gam(std::size_t k) const { return layout_.gamma_offset + k; }

  void fill_gpi_design(std::size_t a, std::size_t b, std::vector<double>& x) const {
    x[0] = 1.0;
    if (spec_.gpi_constant_only) return;
    for (std::size_t k = 0; k < p_; ++k) {
      x[1 + k] = data_[a].w[k];
      x[1 + p_ + k] = data_[b].w[k];
    }
  }

  // Fills dh1_, dgij_, dgji_ (full-length q, zero outside their blocks) and
  // df3_ (derivative of f3 w.r.t. theta, excluding delta).
  void compute_pair_derivatives(std::size_t i, std::size_t j, const PairResponse& r) {
    const std::size_t q = layout_.q;
    dh1_.assign(q, 0.0);
    dgij_.assign(q, 0.0);
    dgji_.assign(q, 0.0);
    df3_.assign(q, 0.0);
    const auto& si = data_[i];
    const auto& sj = data_[j];
    const double pi_i = pi_[i], pi_j = pi_[j];
    const double r_ij = si.z * (1 - sj.z), r_ji = sj.z * (1 - si.z);

    if (layout_.eta_dim) {
      // d pi_i / d eta = pi_i (1 - pi_i) (1, w_i)
      for (std::size_t k = 0; k < layout_.eta_dim; ++k) {
        double xi = k == 0 ? 1.0 : si.w[k - 1];
        double xj = k == 0 ? 1.0 : sj.w[k - 1];
        dh1_[eta(k)] = 0.5 * (dpi_[i] * xi + dpi_[j] * xj);
      }
    }
    if (layout_.gamma_dim) {
      fill_gpi_design(i, j, xij_);
      fill_gpi_design(j, i, xji_);
      double lij = first_[i] + second_[j];
      double lji = first_[j] + second_[i];
      double dij = inverse_link_derivative(spec_.link, lij);
      double dji = inverse_link_derivative(spec_.link, lji);
      for (std::size_t k = 0; k < layout_.gamma_dim; ++k) {
        dgij_[gam(k)] = dij * xij_[k];
        dgji_[gam(k)] = dji * xji_[k];
      }
    }

    const double w_ij = r_ij / (pi_i * (1 - pi_j));
    const double w_ji = r_ji / (pi_j * (1 - pi_i));
    switch (spec_.family) {
      case FrmFamily::msi:
        for (std::size_t k = 0; k < layout_.gamma_dim; ++k)
          df3_[gam(k)] = 0.5 * (1 - r_ij) * dgij_[gam(k)] + 0.5 * (1 - r_ji) * dgji_[gam(k)];
        break;
      case FrmFamily::ipw:
      case FrmFamily::dr: {
        const bool dr = spec_.family == FrmFamily::dr;
        // residual multiplying d w / d eta for each orientation
        double res_ij = r_ij ? r.f2[0] - (dr ? r.h2[0] : 0.0) : 0.0;
        double res_ji = r_ji ? r.f2[1] - (dr ? r.h2[1] : 0.0) : 0.0;
        for (std::size_t k = 0; k < layout_.eta_dim; ++k) {
          double xi = k == 0 ? 1.0 : si.w[k - 1];
          double xj = k == 0 ? 1.0 : sj.w[k - 1];
          double dlog_ij = dpi_[i] * xi / pi_i - dpi_[j] * xj / (1 - pi_j);
          double dlog_ji = dpi_[j] * xj / pi_j - dpi_[i] * xi / (1 - pi_i);
          df3_[eta(k)] = 0.5 * res_ij * (-w_ij * dlog_ij) + 0.5 * res_ji * (-w_ji * dlog_ji);
        }
        if (dr)
          for (std::size_t k = 0; k < layout_.gamma_dim; ++k)
            df3_[gam(k)] = 0.5 * (1 - w_ij) * dgij_[gam(k)] + 0.5 * (1 - w_ji) * dgji_[gam(k)];
        break;
      }
    }
  }

  // u_ = U_ij; optionally adds D V^-1 M' into *jacobian.
  void pair_contribution(std::size_t i, std::size_t j, Eigen::MatrixXd* jacobian) {
    const std::size_t q = layout_.q;
    auto r = response(i, j);
    compute_pair_derivatives(i, j, r);
    std::fill(u_.begin(), u_.end(), 0.0);

    if (layout_.eta_dim) {
      const double s1 = r.f1 - r.h1;
      for (std::size_t k = 0; k < layout_.eta_dim; ++k) u_[eta(k)] += dh1_[eta(k)] * s1 / r.V1;
      if (jacobian)
        for (std::size_t k = 0; k < layout_.eta_dim; ++k)
          for (std::size_t l = 0; l < layout_.eta_dim; ++l)
            (*jacobian)(static_cast<Eigen::Index>(eta(k)), static_cast<Eigen::Index>(eta(l))) -=
                dh1_[eta(k)] * dh1_[eta(l)] / r.V1;
    }
    if (layout_.gamma_dim)
      for (int o = 0; o < 2; ++o) {
        if (!r.f2_observed[o]) continue;
        const auto& dg = o == 0 ? dgij_ : dgji_;
        const double g = r.h2[o];
        const double v = g * (1 - g);
        const double s2 = r.f2[o] - g;
        for (std::size_t k = 0; k < layout_.gamma_dim; ++k) u_[gam(k)] += dg[gam(k)] * s2 / v;
        if (jacobian)
          for (std::size_t k = 0; k < layout_.gamma_dim; ++k)
            for (std::size_t l = 0; l < layout_.gamma_dim; ++l)
              (*jacobian)(static_cast<Eigen::Index>(gam(k)), static_cast<Eigen::Index>(gam(l))) -=
                  dg[gam(k)] * dg[gam(l)] / v;
      }
    const double omega = delta_weight(r);
    const std::size_t d = layout_.delta_index;
    u_[d] = omega * (r.f3 - r.h3);
    if (jacobian) {
      for (std::size_t l = 0; l < q; ++l)
        (*jacobian)(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(l)) += omega * df3_[l];
      (*jacobian)(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)) -= omega;
    }
  }

  const Dataset& data_;
  FrmSpec spec_;
  ThetaLayout layout_;
  std::size_t p_;
  bool ties_;
  Eigen::VectorXd theta_;
  std::vector<double> pi_, dpi_, first_, second_;
  std::vector<double> df3_, u_, xij_, xji_;
  std::vector<double> dh1_, dgij_, dgji_;
  std::size_t clipped_ = 0;
};

/// PairResponse of pair (i, j) at theta.
inline PairResponse build_pair_response(const Dataset& data, PairIndex pair,
                                        const Eigen::VectorXd& theta,
                                        const FrmSpec& spec) {
  FrmSystem sys(data, spec);
  sys.set_theta(theta);
  return sys.response(pair.i, pair.j);
}

struct SandwichResult {
  Eigen::MatrixXd Sigma_hat;    // n^-1 sum v_i v_i'
  Eigen::MatrixXd B_hat;        // C(n,2)^-1 sum D V^-1 M'
  Eigen::MatrixXd Sigma_theta;  // 4 B^-1 Sigma B^-T
  Eigen::VectorXd se;           // sqrt(diag(Sigma_theta) / n)
  Eigen::MatrixXd projections;  // v_i, one row per subject
  std::vector<std::string> warnings;
};

inline SandwichResult sandwich_from_system(FrmSystem& sys) {
  const std::size_t n = sys.data().size();
  const double nd = static_cast<double>(n);
  Eigen::VectorXd score;
  Eigen::MatrixXd jac, proj;
  sys.accumulate(score, &jac, &proj);
  SandwichResult out;
  out.projections = proj / (nd - 1.0);
  out.Sigma_hat = out.projections.transpose() * out.projections / nd;
  out.B_hat = jac / static_cast<double>(pair_count(n));
  Eigen::FullPivLU<Eigen::MatrixXd> lu(out.B_hat);
  if (!lu.isInvertible())
    throw EstimabilityError(
        "sandwich_covariance: B is singular; consider the misspecification "
        "switches (intercept-only propensity or constant g)");
  Eigen::MatrixXd b_inv = lu.inverse();
  Eigen::MatrixXd cov = 4.0 * b_inv * out.Sigma_hat * b_inv.transpose();
  cov = 0.5 * (cov + cov.transpose());
  const auto q = cov.rows();
  out.se.resize(q);
  for (Eigen::Index k = 0; k < q; ++k) {
    if (cov(k, k) < 0.0) {
      out.warnings.push_back("negative variance for component " + std::to_string(k) +
                             " floored at 0");
      cov(k, k) = 0.0;
    }
    out.se[k] = std::sqrt(cov(k, k) / nd);
  }
  out.Sigma_theta = cov;
  return out;
}

/// Sandwich covariance at a given root theta_hat.
inline SandwichResult sandwich_covariance(const Dataset& data,
                                          const Eigen::VectorXd& theta_hat,
                                          const FrmSpec& spec) {
  FrmSystem sys(data, spec);
  sys.set_theta(theta_hat);
  return sandwich_from_system(sys);
}

struct UgeeFit {
  FrmSpec spec;
  ThetaLayout layout;
  std::vector<std::string> names;
  Eigen::VectorXd theta_hat;
  Eigen::VectorXd se;
  Eigen::MatrixXd Sigma_hat, B_hat, Sigma_theta;
  Eigen::MatrixXd projections;
  std::size_t n = 0;
  bool converged = false;
  int iterations = 0;
  double max_abs_score = 0.0;
  /// Unweighted pair average of f3 at theta_hat.
  double plain_delta = 0.0;
  double derivative_check_error = 0.0;
  bool derivative_check_passed = true;
  std::size_t clipped = 0;
  /// Starting values from the standalone plug-in fits.
  Eigen::VectorXd initial_theta;
  std::vector<std::string> warnings;

  std::size_t index_of(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw DomainError("unknown parameter '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
  }
  double delta() const { return theta_hat[static_cast<Eigen::Index>(layout.delta_index)]; }
  double delta_se() const { return se[static_cast<Eigen::Index>(layout.delta_index)]; }
};

namespace detail {

/// Largest relative deviation between analytic and central-difference
/// residual Jacobians over a deterministic spread of pairs.
inline double derivative_check(FrmSystem& sys, const Eigen::VectorXd& theta, int pairs) {
  const std::size_t n = sys.data().size();
  const std::size_t total = pair_count(n);
  if (total == 0 || pairs <= 0) return 0.0;
  double worst = 0.0;
  const std::size_t stride = std::max<std::size_t>(1, total / static_cast<std::size_t>(pairs));
  std::size_t seen = 0, taken = 0;
  for (std::size_t i = 0; i + 1 < n && taken < static_cast<std::size_t>(pairs); ++i)
    for (std::size_t j = i + 1; j < n && taken < static_cast<std::size_t>(pairs); ++j, ++seen) {
      if (seen % stride != 0) continue;
      ++taken;
      sys.set_theta(theta);
      Eigen::MatrixXd analytic = sys.pair_residual_jacobian(i, j);
      Eigen::MatrixXd numeric(analytic.rows(), analytic.cols());
      for (Eigen::Index k = 0; k < theta.size(); ++k) {
        double h = 1e-6 * std::max(1.0, std::abs(theta[k]));
        Eigen::VectorXd tp = theta, tm = theta;
        tp[k] += h;
        tm[k] -= h;
        sys.set_theta(tp);
        Eigen::VectorXd sp = sys.pair_residual(i, j);
        sys.set_theta(tm);
        Eigen::VectorXd sm = sys.pair_residual(i, j);
        numeric.col(k) = (sp - sm) / (2 * h);
      }
      double scale = std::max(analytic.cwiseAbs().maxCoeff(), 1e-8);
      worst = std::max(worst, (analytic - numeric).cwiseAbs().maxCoeff() / scale);
    }
  sys.set_theta(theta);
  return worst;
}

}  // namespace detail

/// Plug-in starting values: eta from the logistic MLE, gamma from the
/// discordant-pair fit, delta from the matching point estimator.
inline Eigen::VectorXd default_initial_theta(const Dataset& data, const FrmSpec& spec) {
  auto layout = ThetaLayout::make(spec, data.covariate_dim());
  Eigen::VectorXd theta(static_cast<Eigen::Index>(layout.q));
  EstimatorOptions opts{spec.ties, false};
  std::optional<PropensityModel> prop;
  std::optional<GpiModel> gpi;
  if (layout.eta_dim) {
    PropensitySpec ps;
    ps.intercept_only = spec.propensity_intercept_only;
    ps.covariate_names = spec.covariate_names;
    prop = fit_propensity(data, ps);
    prop->clip_eps = spec.clip_eps;
    theta.segment(static_cast<Eigen::Index>(layout.eta_offset),
                  static_cast<Eigen::Index>(layout.eta_dim)) = prop->eta;
  }
  if (layout.gamma_dim) {
    GpiSpec gs;
    gs.link = spec.link;
    gs.constant_only = spec.gpi_constant_only;
    gs.ties = spec.ties;
    gpi = fit_gpi(data, gs);
    theta.segment(static_cast<Eigen::Index>(layout.gamma_offset),
                  static_cast<Eigen::Index>(layout.gamma_dim)) = gpi->gamma;
  }
  double delta = 0.5;
  switch (spec.family) {
    case FrmFamily::ipw: delta = ipw_estimate(data, *prop, opts).delta_hat; break;
    case FrmFamily::msi: delta = msi_estimate(data, *gpi, opts).delta_hat; break;
    case FrmFamily::dr: delta = dr_estimate(data, *prop, *gpi, opts).delta_hat; break;
  }
  theta[static_cast<Eigen::Index>(layout.delta_index)] = delta;
  return theta;
}

/**
 * Solves the stacked pairwise estimating equations
 *
 *     U(theta) = sum_{i<j} D_ij V_ij^-1 S_ij = 0
 *
 * with identity working correlation, by Fisher-type Newton steps
 * theta <- theta - J^-1 U where J = sum D V^-1 M'. The sandwich covariance
 * is computed at the root.
 */
inline UgeeFit solve_ugee(const Dataset& data, const FrmSpec& spec,
                          std::optional<Eigen::VectorXd> init = std::nullopt) {
  require_both_arms(data, "solve_ugee");
  FrmSystem sys(data, spec);
  UgeeFit fit;
  fit.spec = spec;
  fit.layout = sys.layout();
  fit.n = data.size();
  fit.names = parameter_names(spec, data.covariate_dim());
  Eigen::VectorXd theta = init ? *init : default_initial_theta(data, spec);
  if (static_cast<std::size_t>(theta.size()) != fit.layout.q)
    throw DomainError("solve_ugee: initial theta has wrong dimension");
  fit.initial_theta = theta;

  const double pairs = static_cast<double>(pair_count(data.size()));
  Eigen::VectorXd score;
  Eigen::MatrixXd jac;
  for (int iter = 0; iter <= spec.max_iter; ++iter) {
    sys.set_theta(theta);
    sys.accumulate(score, &jac, nullptr);
    fit.max_abs_score = score.cwiseAbs().maxCoeff();
    fit.iterations = iter;
    if (!std::isfinite(fit.max_abs_score))
      throw ConvergenceError("solve_ugee: non-finite estimating equation",
                             std::vector<double>(theta.data(), theta.data() + theta.size()),
                             fit.max_abs_score);
    if (fit.max_abs_score <= spec.tol) {
      fit.converged = true;
      break;
    }
    if (iter == spec.max_iter) break;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    if (!lu.isInvertible())
      throw EstimabilityError(
          "solve_ugee: singular Jacobian; consider the misspecification "
          "switches (intercept-only propensity or constant g)");
    Eigen::VectorXd step = lu.solve(score);
    theta -= step;
    // Floating-point floor for sums over many pairs.
    if (step.norm() <= 1e-13 * (1.0 + theta.norm()) &&
        fit.max_abs_score <= 1e-12 * pairs) {
      sys.set_theta(theta);
      sys.accumulate(score, nullptr, nullptr);
      fit.max_abs_score = score.cwiseAbs().maxCoeff();
      fit.converged = true;
      fit.iterations = iter + 1;
      break;
    }
  }
  if (!fit.converged)
    throw ConvergenceError("solve_ugee: no convergence after " +
                               std::to_string(spec.max_iter) +
                               " iterations (max |U| = " +
                               std::to_string(fit.max_abs_score) + ")",
                           std::vector<double>(theta.data(), theta.data() + theta.size()),
                           fit.max_abs_score);
  fit.theta_hat = theta;

  if (spec.check_derivatives) {
    fit.derivative_check_error =
        detail::derivative_check(sys, theta, spec.derivative_check_pairs);
    fit.derivative_check_passed = fit.derivative_check_error <= spec.derivative_check_tol;
    if (!fit.derivative_check_passed)
      fit.warnings.push_back("analytic M differs from finite differences (rel " +
                             std::to_string(fit.derivative_check_error) + ")");
  }

  sys.set_theta(theta);
  fit.clipped = sys.clipped_count();
  if (fit.clipped)
    fit.warnings.push_back(std::to_string(fit.clipped) + " propensities at the clip bound");
  {
    CompensatedSum f3;
    for_each_pair(data.size(), [&](PairIndex pr) { f3.add(sys.response(pr.i, pr.j).f3); });
    fit.plain_delta = f3.value() / pairs;
  }
  auto sw = sandwich_from_system(sys);
  fit.Sigma_hat = std::move(sw.Sigma_hat);
  fit.B_hat = std::move(sw.B_hat);
  fit.Sigma_theta = std::move(sw.Sigma_theta);
  fit.se = std::move(sw.se);
  fit.projections = std::move(sw.projections);
  for (auto& w : sw.warnings) fit.warnings.push_back(std::move(w));
  return fit;
}

//---------------------------------------------------------------------------//
// Wald tests
//---------------------------------------------------------------------------//

struct WaldResult {
  double estimate = 0, se = 0, null_value = 0, alpha = 0.05;
  double z = 0, p_value = 1;
  double ci_lo = 0, ci_hi = 0;
  bool reject = false;
};

namespace detail {
/// z such that P(|Z| > z) = alpha, by bisection on erfc.
inline double two_sided_critical_value(double alpha) {
  double lo = 0.0, hi = 40.0;
  for (int k = 0; k < 200; ++k) {
    double mid = 0.5 * (lo + hi);
    (std::erfc(mid * M_SQRT1_2) > alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}
}  // namespace detail

inline WaldResult wald_test(double estimate, double se, double null_value,
                            double alpha = 0.05) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("wald_test: alpha must lie in (0, 1)");
  if (!(se > 0.0) || !std::isfinite(se))
    throw EstimabilityError("wald_test: degenerate test (standard error is " +
                            std::to_string(se) + ")");
  WaldResult w;
  w.estimate = estimate;
  w.se = se;
  w.null_value = null_value;
  w.alpha = alpha;
  w.z = (estimate - null_value) / se;
  w.p_value = std::erfc(std::abs(w.z) * M_SQRT1_2);
  double crit = detail::two_sided_critical_value(alpha);
  w.ci_lo = estimate - crit * se;
  w.ci_hi = estimate + crit * se;
  w.reject = w.p_value < alpha;
  return w;
}

inline WaldResult wald_test(const UgeeFit& fit, const std::string& component,
                            double null_value, double alpha = 0.05) {
  auto k = static_cast<Eigen::Index>(fit.index_of(component));
  return wald_test(fit.theta_hat[k], fit.se[k], null_value, alpha);
}

}  // namespace drmww
