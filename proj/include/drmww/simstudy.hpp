#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "drmww/core_math.hpp"
#include "drmww/data.hpp"
#include "drmww/errors.hpp"
#include "drmww/estimators.hpp"
#include "drmww/ugee.hpp"

namespace drmww {

/// Distribution of b and e. `normal` is a diagnostic alternative to the
/// centered chi-square; both have the configured variances.
enum class NoiseFamily { centered_chisq, normal };

inline const char* to_string(NoiseFamily f) {
  return f == NoiseFamily::normal ? "normal" : "centered_chisq";
}

/**
 * Simulation scenario:
 *
 *     y_ik = beta0 + beta1 I(k = 1) + beta2 w_i + b_i + e_ik,
 *     w ~ N(mu_w, sigma2_w), z ~ Bern(expit(eta0 + eta1 w)),
 *     b, e ~ centered chi-square(1) scaled to variances sigma2_b, sigma2.
 */
struct ScenarioConfig {
  std::string label = "scenario";
  std::array<double, 3> beta{0.0, 0.0, 1.0};
  std::array<double, 2> eta_true{1.0, -1.0};
  double sigma2 = 1.0;
  double sigma2_b = 1.0;
  double mu_w = 1.0;
  double sigma2_w = 0.25;
  std::size_t n = 200;
  std::size_t reps = 1000;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  bool misspecify_propensity = false;
  bool misspecify_outcome = false;
  std::vector<EstimatorKind> estimators{EstimatorKind::dr, EstimatorKind::ipw,
                                        EstimatorKind::msi, EstimatorKind::mww};
  Link link = Link::probit;
  DeltaWeighting delta_weighting = DeltaWeighting::uniform;
  double clip_eps = kDefaultClipEps;
  /// Redraw a replication whose sample has a single arm (else fail it).
  bool regenerate_degenerate = true;
  std::uint64_t oracle_pairs = 10'000'000;
  NoiseFamily noise = NoiseFamily::centered_chisq;

  void validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
      throw Error(ErrorKind::validation, "invalid scenario field '" + field + "': " + why);
    };
    if (!(sigma2 > 0) || !std::isfinite(sigma2)) fail("sigma2", "must be > 0");
    if (!(sigma2_b > 0) || !std::isfinite(sigma2_b)) fail("sigma2_b", "must be > 0");
    if (!(sigma2_w > 0) || !std::isfinite(sigma2_w)) fail("sigma2_w", "must be > 0");
    if (n < 4) fail("n", "must be >= 4");
    if (reps < 1) fail("reps", "must be >= 1");
    if (!(alpha > 0 && alpha < 1)) fail("alpha", "must lie in (0, 1)");
    if (!(clip_eps > 0 && clip_eps < 0.5)) fail("clip_eps", "must lie in (0, 0.5)");
    if (estimators.empty()) fail("estimators", "must name at least one estimator");
    for (double v : beta)
      if (!std::isfinite(v)) fail("beta", "must be finite");
    for (double v : eta_true)
      if (!std::isfinite(v)) fail("eta_true", "must be finite");
    if (!std::isfinite(mu_w)) fail("mu_w", "must be finite");
    if (oracle_pairs < 1) fail("oracle_pairs", "must be >= 1");
  }

  bool runs(EstimatorKind kind) const {
    return std::find(estimators.begin(), estimators.end(), kind) != estimators.end();
  }
};

struct GeneratedReplication {
  PotentialDataset potential;
  Dataset observed;
  int regenerations = 0;
};

namespace detail {

inline double sample_noise(NoiseFamily f, double var, RngStream& rng) {
  return f == NoiseFamily::normal ? sample_normal(0.0, var, rng)
                                  : sample_centered_chisq(var, rng);
}

inline std::uint64_t replication_stream(std::size_t rep, int attempt) {
  return (static_cast<std::uint64_t>(attempt) << 40) ^ static_cast<std::uint64_t>(rep);
}

inline PotentialDataset draw_potential(const ScenarioConfig& c, RngStream& rng) {
  PotentialDataset pd;
  pd.subjects.resize(c.n);
  for (auto& s : pd.subjects) {
    double w = sample_normal(c.mu_w, c.sigma2_w, rng);
    double pi = expit(c.eta_true[0] + c.eta_true[1] * w);
    s.w = {w};
    s.z = sample_bernoulli(pi, rng);
    s.b = sample_noise(c.noise, c.sigma2_b, rng);
    double e1 = sample_noise(c.noise, c.sigma2, rng);
    double e0 = sample_noise(c.noise, c.sigma2, rng);
    s.y1 = c.beta[0] + c.beta[1] + c.beta[2] * w + s.b + e1;
    s.y0 = c.beta[0] + c.beta[2] * w + s.b + e0;
  }
  return pd;
}

inline bool single_arm(const PotentialDataset& pd) {
  std::size_t treated = 0;
  for (const auto& s : pd.subjects) treated += static_cast<std::size_t>(s.z);
  return treated == 0 || treated == pd.subjects.size();
}

}  // namespace detail

/// One replication, keyed by (seed, rep_index). Single-arm draws are redrawn
/// from a fresh sub-stream when the config allows it.
inline GeneratedReplication generate_dataset(const ScenarioConfig& config,
                                             std::size_t rep_index) {
  config.validate();
  for (int attempt = 0; attempt < 1000; ++attempt) {
    RngStream rng(config.seed, detail::replication_stream(rep_index, attempt));
    auto pd = detail::draw_potential(config, rng);
    if (detail::single_arm(pd)) {
      if (!config.regenerate_degenerate)
        throw EstimabilityError("replication " + std::to_string(rep_index) +
                                ": all subjects in one arm");
      continue;
    }
    auto observed = pd.observe();
    return {std::move(pd), std::move(observed), attempt};
  }
  throw EstimabilityError("replication " + std::to_string(rep_index) +
                          ": could not draw both arms");
}

/// Probit-scale coefficients (gamma0, gamma11, gamma10) implied by the
/// scenario under a normal approximation of the noise difference.
inline std::array<double, 3> true_gamma(const ScenarioConfig& c) {
  const double s = 1.0 / std::sqrt(2.0 * (c.sigma2 + c.sigma2_b));
  return {-s * c.beta[1], -s * c.beta[2], s * c.beta[2]};
}

/**
 * Population delta = P(y_i1 <= y_j0) for independent subjects i, j.
 *
 * Exactly 1/2 when beta1 = 0 (the two potential outcomes are exchangeable);
 * otherwise estimated from `oracle_pairs` independent draws.
 */
inline double true_delta(const ScenarioConfig& c) {
  if (c.beta[1] == 0.0) return 0.5;
  RngStream rng(c.seed ^ 0x6a09e667f3bcc909ull, 0xffffffffffffull);
  std::uint64_t hits = 0;
  for (std::uint64_t k = 0; k < c.oracle_pairs; ++k) {
    double wi = sample_normal(c.mu_w, c.sigma2_w, rng);
    double wj = sample_normal(c.mu_w, c.sigma2_w, rng);
    double y1 = c.beta[0] + c.beta[1] + c.beta[2] * wi +
                detail::sample_noise(c.noise, c.sigma2_b, rng) +
                detail::sample_noise(c.noise, c.sigma2, rng);
    double y0 = c.beta[0] + c.beta[2] * wj + detail::sample_noise(c.noise, c.sigma2_b, rng) +
                detail::sample_noise(c.noise, c.sigma2, rng);
    hits += y1 <= y0 ? 1u : 0u;
  }
  return static_cast<double>(hits) / static_cast<double>(c.oracle_pairs);
}

//---------------------------------------------------------------------------//
// Replicated study
//---------------------------------------------------------------------------//

struct CoefficientSummary {
  std::string name;
  double mean = 0, mean_ase = 0, ese = 0;
  /// Mean of the standalone plug-in fit for the same coefficient.
  double plugin_mean = 0;
};

struct EstimatorSummary {
  EstimatorKind kind = EstimatorKind::dr;
  std::string label;
  std::size_t count = 0;
  double mean = 0, mean_ase = 0, ese = 0;
  double rejection_rate = 0;
  double percent_bias = 0;
  std::vector<CoefficientSummary> coefficients;
};

struct StudySummary {
  ScenarioConfig config;
  double true_delta = 0.5;
  std::array<double, 3> true_gamma{};
  std::size_t reps_used = 0;
  std::size_t failures = 0;
  std::size_t regenerations = 0;
  std::vector<std::string> failure_messages;
  std::vector<EstimatorSummary> estimators;

  const EstimatorSummary& get(EstimatorKind kind) const {
    for (const auto& e : estimators)
      if (e.kind == kind) return e;
    throw DomainError(std::string("estimator ") + to_string(kind) + " not in study");
  }
};

/// Label used in tables: DR, DR^IPW (only propensity correct), ...
inline std::string estimator_label(EstimatorKind kind, const ScenarioConfig& c) {
  std::string base = to_string(kind);
  if (kind == EstimatorKind::dr) {
    if (c.misspecify_propensity && !c.misspecify_outcome) return "DR^MSI";
    if (c.misspecify_outcome && !c.misspecify_propensity) return "DR^IPW";
  }
  return base;
}

struct ReplicationRecord {
  bool ok = false;
  std::string error;
  int regenerations = 0;
  struct Entry {
    double delta = 0, se = 0;
    bool reject = false;
    std::vector<double> coef, coef_se, plugin;
  };
  std::vector<Entry> entries;  // one per config.estimators, same order
};

inline FrmSpec frm_spec_for(EstimatorKind kind, const ScenarioConfig& c) {
  FrmSpec spec;
  spec.family = kind == EstimatorKind::ipw   ? FrmFamily::ipw
                : kind == EstimatorKind::msi ? FrmFamily::msi
                                             : FrmFamily::dr;
  spec.propensity_intercept_only = c.misspecify_propensity;
  spec.gpi_constant_only = c.misspecify_outcome;
  spec.link = c.link;
  spec.clip_eps = c.clip_eps;
  spec.delta_weighting = c.delta_weighting;
  return spec;
}

inline ReplicationRecord run_replication(const ScenarioConfig& c, std::size_t rep) {
  ReplicationRecord rec;
  try {
    auto gen = generate_dataset(c, rep);
    rec.regenerations = gen.regenerations;
    for (auto kind : c.estimators) {
      ReplicationRecord::Entry e;
      if (kind == EstimatorKind::mww) {
        auto r = mww_estimate(gen.observed);
        e.delta = r.delta_hat;
        e.se = *r.se;
      } else {
        auto fit = solve_ugee(gen.observed, frm_spec_for(kind, c));
        e.delta = fit.delta();
        e.se = fit.delta_se();
        for (std::size_t k = 0; k < fit.layout.delta_index; ++k) {
          e.coef.push_back(fit.theta_hat[static_cast<Eigen::Index>(k)]);
          e.coef_se.push_back(fit.se[static_cast<Eigen::Index>(k)]);
          e.plugin.push_back(fit.initial_theta[static_cast<Eigen::Index>(k)]);
        }
      }
      e.reject = wald_test(e.delta, e.se, 0.5, c.alpha).reject;
      rec.entries.push_back(std::move(e));
    }
    rec.ok = true;
  } catch (const Error& err) {
    rec.ok = false;
    rec.error = "replication " + std::to_string(rep) + ": " + err.what();
    rec.entries.clear();
  }
  return rec;
}

inline unsigned default_thread_count() {
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

/**
 * Runs all replications (in parallel over `threads` workers) and aggregates
 * in replication order, so the summary does not depend on the worker count.
 */
inline StudySummary run_study(const ScenarioConfig& c, unsigned threads = 0) {
  c.validate();
  if (threads == 0) threads = default_thread_count();
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, c.reps));

  std::vector<ReplicationRecord> records(c.reps);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < c.reps; r = next++) records[r] = run_replication(c, r);
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  StudySummary s;
  s.config = c;
  s.true_delta = true_delta(c);
  s.true_gamma = true_gamma(c);
  for (const auto& rec : records) {
    s.regenerations += static_cast<std::size_t>(rec.regenerations);
    if (!rec.ok) {
      ++s.failures;
      if (s.failure_messages.size() < 10) s.failure_messages.push_back(rec.error);
    }
  }
  s.reps_used = c.reps - s.failures;
  if (s.failures * 100 > c.reps)
    throw Error(ErrorKind::convergence,
                "run_study: " + std::to_string(s.failures) + " of " +
                    std::to_string(c.reps) + " replications failed (> 1%); first: " +
                    (s.failure_messages.empty() ? "" : s.failure_messages.front()));

  FrmSpec names_spec;
  for (std::size_t e = 0; e < c.estimators.size(); ++e) {
    EstimatorSummary es;
    es.kind = c.estimators[e];
    es.label = estimator_label(es.kind, c);
    std::vector<double> deltas, ses;
    std::size_t rejects = 0;
    std::vector<std::vector<double>> coefs, coef_ses, plugins;
    for (const auto& rec : records) {
      if (!rec.ok) continue;
      const auto& entry = rec.entries[e];
      deltas.push_back(entry.delta);
      ses.push_back(entry.se);
      rejects += entry.reject ? 1u : 0u;
      coefs.push_back(entry.coef);
      coef_ses.push_back(entry.coef_se);
      plugins.push_back(entry.plugin);
    }
    auto mean = [](const std::vector<double>& v) {
      CompensatedSum acc;
      for (double x : v) acc.add(x);
      return v.empty() ? 0.0 : acc.value() / static_cast<double>(v.size());
    };
    auto sd = [&](const std::vector<double>& v) {
      if (v.size() < 2) return 0.0;
      double m = mean(v);
      CompensatedSum acc;
      for (double x : v) acc.add((x - m) * (x - m));
      return std::sqrt(acc.value() / static_cast<double>(v.size() - 1));
    };
    es.count = deltas.size();
    es.mean = mean(deltas);
    es.mean_ase = mean(ses);
    es.ese = sd(deltas);
    es.rejection_rate = es.count ? static_cast<double>(rejects) / static_cast<double>(es.count) : 0.0;
    es.percent_bias = 100.0 * (es.mean - s.true_delta) / s.true_delta;
    if (es.kind != EstimatorKind::mww && !coefs.empty()) {
      auto spec = frm_spec_for(es.kind, c);
      auto names = parameter_names(spec, 1);
      for (std::size_t k = 0; k < coefs.front().size(); ++k) {
        std::vector<double> col, col_se, col_plugin;
        for (std::size_t r = 0; r < coefs.size(); ++r) {
          col.push_back(coefs[r][k]);
          col_se.push_back(coef_ses[r][k]);
          col_plugin.push_back(plugins[r][k]);
        }
        es.coefficients.push_back({names[k], mean(col), mean(col_se), sd(col), mean(col_plugin)});
      }
    }
    s.estimators.push_back(std::move(es));
  }
  return s;
}

//---------------------------------------------------------------------------//
// Presets
//---------------------------------------------------------------------------//

/// Null scenario, both working models correct; all four estimators.
inline ScenarioConfig preset_null(std::size_t n, std::size_t reps, std::uint64_t seed) {
  ScenarioConfig c;
  c.label = "null n=" + std::to_string(n);
  c.n = n;
  c.reps = reps;
  c.seed = seed;
  return c;
}

/// DR with only one working model correct, plus the misspecified single
/// estimator: {propensity misspecified: DR, IPW}, {outcome misspecified: DR, MSI}.
inline std::vector<ScenarioConfig> preset_single_misspecification(std::size_t n, std::size_t reps,
                                                                 std::uint64_t seed) {
  ScenarioConfig a = preset_null(n, reps, seed);
  a.label = "propensity misspecified n=" + std::to_string(n);
  a.misspecify_propensity = true;
  a.estimators = {EstimatorKind::dr, EstimatorKind::ipw};
  ScenarioConfig b = preset_null(n, reps, seed);
  b.label = "outcome misspecified n=" + std::to_string(n);
  b.misspecify_outcome = true;
  b.estimators = {EstimatorKind::dr, EstimatorKind::msi};
  return {a, b};
}

/// Alternative with treatment shift beta1 = 1.
inline ScenarioConfig preset_power(std::size_t n, std::size_t reps, std::uint64_t seed) {
  ScenarioConfig c = preset_null(n, reps, seed);
  c.label = "power beta1=1 n=" + std::to_string(n);
  c.beta[1] = 1.0;
  return c;
}

}  // namespace drmww
