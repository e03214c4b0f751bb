#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drmww/core_math.hpp"
#include "drmww/data.hpp"
#include "drmww/errors.hpp"
#include "drmww/gpi.hpp"
#include "drmww/propensity.hpp"

namespace drmww {

enum class EstimatorKind { mww, ipw, msi, dr };

inline const char* to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::mww: return "MWW";
    case EstimatorKind::ipw: return "IPW";
    case EstimatorKind::msi: return "MSI";
    case EstimatorKind::dr: return "DR";
  }
  return "?";
}

struct EstimateResult {
  EstimatorKind kind = EstimatorKind::mww;
  double delta_hat = 0.0;
  std::optional<double> se;
  std::size_t n = 0, n1 = 0, n0 = 0;
  bool ties = false;
  bool hajek = false;
  /// Subjects whose propensity sits at the clip bound.
  std::size_t clipped = 0;
  std::vector<std::string> notes;
};

struct EstimatorOptions {
  /// Request the half-tie kernel; count outcomes always use it.
  bool ties = false;
  /// Divide the weighted residual sum by its realized weight total (A_n)
  /// instead of the pair count.
  bool hajek = false;
};

/**
 * Per-pair functional responses for a pair (i, j), i < j.
 *
 * `ind_ij` is I(y_i1 <= y_j0) when z_i = 1, z_j = 0 and `ind_ji` is
 * I(y_j1 <= y_i0) when z_j = 1, z_i = 0; unobserved indicators are ignored.
 */
struct PairInputs {
  int z_i, z_j;
  double pi_i, pi_j;
  double g_ij, g_ji;
  double ind_ij, ind_ji;
};

struct PairTerms {
  double ipw;
  double msi;
  double dr;
  /// IPW weight mass of the pair, 0.5 * (r_ij w_ij + r_ji w_ji).
  double weight;
  /// Augmentation part of f_DR: mean of the two g's.
  double imputed;
  /// Weighted residual part of f_DR.
  double residual;
};

inline PairTerms pair_terms(const PairInputs& in) noexcept {
  const double r_ij = in.z_i * (1 - in.z_j);
  const double r_ji = in.z_j * (1 - in.z_i);
  const double w_ij = r_ij / (in.pi_i * (1.0 - in.pi_j));
  const double w_ji = r_ji / (in.pi_j * (1.0 - in.pi_i));
  const double obs_ij = r_ij != 0.0 ? in.ind_ij : 0.0;
  const double obs_ji = r_ji != 0.0 ? in.ind_ji : 0.0;
  PairTerms t{};
  t.ipw = 0.5 * (w_ij * obs_ij + w_ji * obs_ji);
  t.msi = 0.5 * (r_ij * obs_ij + (1.0 - r_ij) * in.g_ij) +
          0.5 * (r_ji * obs_ji + (1.0 - r_ji) * in.g_ji);
  t.dr = 0.5 * (w_ij * obs_ij + (1.0 - w_ij) * in.g_ij) +
         0.5 * (w_ji * obs_ji + (1.0 - w_ji) * in.g_ji);
  t.weight = 0.5 * (w_ij + w_ji);
  t.imputed = 0.5 * (in.g_ij + in.g_ji);
  t.residual = 0.5 * (w_ij * (obs_ij - in.g_ij) + w_ji * (obs_ji - in.g_ji));
  return t;
}

namespace detail {

inline EstimateResult make_result(EstimatorKind kind, const Dataset& data,
                                  bool ties, bool hajek) {
  EstimateResult r;
  r.kind = kind;
  r.n = data.size();
  r.n1 = data.n_treated();
  r.n0 = data.n_control();
  r.ties = ties;
  r.hajek = hajek;
  if (ties) r.notes.emplace_back("half-tie kernel");
  if (hajek) r.notes.emplace_back("Hajek-normalized weights");
  return r;
}

inline void note_clipping(EstimateResult& r, std::span<const double> pi,
                          double clip_eps) {
  for (double p : pi)
    if (p <= clip_eps || p >= 1.0 - clip_eps) ++r.clipped;
  if (r.clipped > 0)
    r.notes.push_back(std::to_string(r.clipped) +
                      " propensities at the clip bound");
}

inline void note_range(EstimateResult& r) {
  if (r.delta_hat < 0.0 || r.delta_hat > 1.0)
    r.notes.emplace_back("estimate outside [0, 1]");
}

}  // namespace detail

/// Two-sample Mann-Whitney estimate with the U-statistic projection SE.
inline EstimateResult mww_estimate(const Dataset& data,
                                   const EstimatorOptions& opts = {}) {
  require_both_arms(data, "mww_estimate");
  const bool ties = use_ties(data, opts.ties);
  std::vector<std::size_t> treated, control;
  for (std::size_t k = 0; k < data.size(); ++k)
    (data[k].z == 1 ? treated : control).push_back(k);
  const double n1 = static_cast<double>(treated.size());
  const double n0 = static_cast<double>(control.size());

  std::vector<double> row(treated.size(), 0.0), col(control.size(), 0.0);
  CompensatedSum total;
  for (std::size_t a = 0; a < treated.size(); ++a)
    for (std::size_t b = 0; b < control.size(); ++b) {
      double k = kernel(data[treated[a]].y, data[control[b]].y, ties);
      row[a] += k;
      col[b] += k;
      total.add(k);
    }
  const double delta = total.value() / (n1 * n0);

  auto component_variance = [delta](const std::vector<double>& sums, double m) {
    if (sums.size() < 2) return 0.0;
    double ss = 0.0;
    for (double s : sums) ss += (s / m - delta) * (s / m - delta);
    return ss / static_cast<double>(sums.size() - 1);
  };
  const double var = component_variance(row, n0) / n1 + component_variance(col, n1) / n0;

  auto r = detail::make_result(EstimatorKind::mww, data, ties, false);
  r.delta_hat = delta;
  r.se = std::sqrt(var);
  return r;
}

/// Per-subject propensities from a fitted model.
inline std::vector<double> propensities(const Dataset& data,
                                        const PropensityModel& model) {
  std::vector<double> pi(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) pi[i] = predict_pi(model, data[i].w);
  return pi;
}

/**
 * Fitted g values for every ordered pair: g(w_i, w_j) at [i * n + j].
 * The linear predictor splits into per-subject parts, so this costs one
 * inverse-link evaluation per ordered pair.
 */
class PairwiseG {
 public:
  PairwiseG(const Dataset& data, const GpiModel& model) : n_(data.size()) {
    first_.resize(n_);
    second_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      first_[i] = model.gamma0() + model.first_part(data[i].w);
      second_[i] = model.second_part(data[i].w);
    }
    link_ = model.link;
  }
  double operator()(std::size_t i, std::size_t j) const {
    return inverse_link(link_, first_[i] + second_[j]);
  }

 private:
  std::size_t n_;
  std::vector<double> first_, second_;
  Link link_ = Link::probit;
};

/// Calls fn(PairIndex, PairInputs) for each i < j.
template <class GFn, class Fn>
void for_each_pair_input(const Dataset& data, std::span<const double> pi,
                         const GFn& g, bool ties, Fn&& fn) {
  const std::size_t n = data.size();
  for (std::size_t i = 0; i + 1 < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& si = data[i];
      const auto& sj = data[j];
      PairInputs in{si.z, sj.z, pi[i], pi[j], g(i, j), g(j, i), 0.0, 0.0};
      if (si.z == 1 && sj.z == 0) in.ind_ij = kernel(si.y, sj.y, ties);
      if (sj.z == 1 && si.z == 0) in.ind_ji = kernel(sj.y, si.y, ties);
      fn(PairIndex{i, j}, in);
    }
}

namespace detail {
struct ConstantHalf {
  double operator()(std::size_t, std::size_t) const { return 0.5; }
};
}  // namespace detail

/// IPW estimate from per-subject propensities (already clipped).
inline EstimateResult ipw_estimate(const Dataset& data, std::span<const double> pi,
                                   const EstimatorOptions& opts = {},
                                   double clip_eps = kDefaultClipEps) {
  require_both_arms(data, "ipw_estimate");
  const bool ties = use_ties(data, opts.ties);
  CompensatedSum sum, mass;
  for_each_pair_input(data, pi, detail::ConstantHalf{}, ties,
                      [&](PairIndex, const PairInputs& in) {
                        auto t = pair_terms(in);
                        sum.add(t.ipw);
                        mass.add(t.weight);
                      });
  auto r = detail::make_result(EstimatorKind::ipw, data, ties, opts.hajek);
  const double denom = opts.hajek ? mass.value()
                                  : static_cast<double>(pair_count(data.size()));
  r.delta_hat = sum.value() / denom;
  detail::note_clipping(r, pi, clip_eps);
  detail::note_range(r);
  return r;
}

inline EstimateResult ipw_estimate(const Dataset& data, const PropensityModel& model,
                                   const EstimatorOptions& opts = {}) {
  auto pi = propensities(data, model);
  return ipw_estimate(data, pi, opts, model.clip_eps);
}

/// Mean-score-imputed estimate: observed discordant indicators kept, the
/// rest replaced by fitted g.
inline EstimateResult msi_estimate(const Dataset& data, const GpiModel& gpi,
                                   const EstimatorOptions& opts = {}) {
  const bool ties = use_ties(data, opts.ties);
  PairwiseG g(data, gpi);
  std::vector<double> pi(data.size(), 0.5);
  CompensatedSum sum;
  for_each_pair_input(data, pi, g, ties, [&](PairIndex, const PairInputs& in) {
    sum.add(pair_terms(in).msi);
  });
  auto r = detail::make_result(EstimatorKind::msi, data, ties, false);
  r.delta_hat = sum.value() / static_cast<double>(pair_count(data.size()));
  return r;
}

/// f_DR for every pair in for_each_pair order.
inline std::vector<double> dr_pair_terms(const Dataset& data,
                                         std::span<const double> pi,
                                         const GpiModel& gpi,
                                         const EstimatorOptions& opts = {}) {
  const bool ties = use_ties(data, opts.ties);
  PairwiseG g(data, gpi);
  std::vector<double> out;
  out.reserve(pair_count(data.size()));
  for_each_pair_input(data, pi, g, ties, [&](PairIndex, const PairInputs& in) {
    out.push_back(pair_terms(in).dr);
  });
  return out;
}

/// Doubly robust estimate: imputed mean plus IPW-weighted residuals.
inline EstimateResult dr_estimate(const Dataset& data, std::span<const double> pi,
                                  const GpiModel& gpi,
                                  const EstimatorOptions& opts = {},
                                  double clip_eps = kDefaultClipEps) {
  require_both_arms(data, "dr_estimate");
  const bool ties = use_ties(data, opts.ties);
  PairwiseG g(data, gpi);
  CompensatedSum imputed, residual, mass;
  for_each_pair_input(data, pi, g, ties, [&](PairIndex, const PairInputs& in) {
    auto t = pair_terms(in);
    imputed.add(t.imputed);
    residual.add(t.residual);
    mass.add(t.weight);
  });
  const double pairs = static_cast<double>(pair_count(data.size()));
  auto r = detail::make_result(EstimatorKind::dr, data, ties, opts.hajek);
  r.delta_hat = imputed.value() / pairs +
                residual.value() / (opts.hajek ? mass.value() : pairs);
  detail::note_clipping(r, pi, clip_eps);
  detail::note_range(r);
  return r;
}

inline EstimateResult dr_estimate(const Dataset& data, const PropensityModel& model,
                                  const GpiModel& gpi,
                                  const EstimatorOptions& opts = {}) {
  auto pi = propensities(data, model);
  return dr_estimate(data, pi, gpi, opts, model.clip_eps);
}

}  // namespace drmww
