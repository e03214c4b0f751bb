#pragma once

#include <cstdio>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "drmww/estimators.hpp"
#include "drmww/simstudy.hpp"
#include "drmww/ugee.hpp"

namespace drmww {

using json = nlohmann::ordered_json;

//---------------------------------------------------------------------------//
// Scenario files
//---------------------------------------------------------------------------//

inline EstimatorKind estimator_from_string(const std::string& s) {
  if (s == "mww" || s == "MWW") return EstimatorKind::mww;
  if (s == "ipw" || s == "IPW") return EstimatorKind::ipw;
  if (s == "msi" || s == "MSI") return EstimatorKind::msi;
  if (s == "dr" || s == "DR") return EstimatorKind::dr;
  throw Error(ErrorKind::validation, "unknown estimator '" + s + "' (expected mww|ipw|msi|dr)");
}

inline Link link_from_string(const std::string& s) {
  if (s == "probit") return Link::probit;
  if (s == "logit") return Link::logit;
  throw Error(ErrorKind::validation, "unknown link '" + s + "' (expected probit|logit)");
}

inline std::string lower_name(EstimatorKind k) {
  std::string s = to_string(k);
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline json scenario_to_json(const ScenarioConfig& c) {
  json j;
  j["label"] = c.label;
  j["beta"] = c.beta;
  j["eta_true"] = c.eta_true;
  j["sigma2"] = c.sigma2;
  j["sigma2_b"] = c.sigma2_b;
  j["mu_w"] = c.mu_w;
  j["sigma2_w"] = c.sigma2_w;
  j["n"] = c.n;
  j["reps"] = c.reps;
  j["seed"] = c.seed;
  j["alpha"] = c.alpha;
  j["misspecify_propensity"] = c.misspecify_propensity;
  j["misspecify_outcome"] = c.misspecify_outcome;
  json est = json::array();
  for (auto k : c.estimators) est.push_back(lower_name(k));
  j["estimators"] = est;
  j["link"] = to_string(c.link);
  j["delta_weighting"] =
      c.delta_weighting == DeltaWeighting::uniform ? "uniform" : "working_variance";
  j["clip_eps"] = c.clip_eps;
  j["regenerate_degenerate"] = c.regenerate_degenerate;
  j["oracle_pairs"] = c.oracle_pairs;
  j["noise"] = to_string(c.noise);
  return j;
}

/**
 * Reads a scenario object. Unknown keys and wrongly typed values are errors
 * naming the field; `seed` is required.
 */
inline ScenarioConfig scenario_from_json(const json& j, ScenarioConfig base = {}) {
  if (!j.is_object()) throw Error(ErrorKind::validation, "scenario must be a JSON object");
  if (!j.contains("seed"))
    throw Error(ErrorKind::validation, "invalid scenario field 'seed': required");
  ScenarioConfig c = std::move(base);
  for (const auto& [key, v] : j.items()) {
    auto bad = [&key = key](const std::string& why) {
      return Error(ErrorKind::validation, "invalid scenario field '" + key + "': " + why);
    };
    auto number = [&](const json& x) {
      if (!x.is_number()) throw bad("expected a number");
      return x.get<double>();
    };
    auto count = [&](const json& x) -> std::uint64_t {
      if (x.is_number_integer() && x.get<std::int64_t>() >= 0) return x.get<std::uint64_t>();
      throw bad("expected a nonnegative integer");
    };
    auto flag = [&](const json& x) {
      if (!x.is_boolean()) throw bad("expected true or false");
      return x.get<bool>();
    };
    auto fixed = [&](const json& x, auto& out) {
      if (!x.is_array() || x.size() != out.size())
        throw bad("expected an array of " + std::to_string(out.size()) + " numbers");
      for (std::size_t k = 0; k < out.size(); ++k) out[k] = number(x[k]);
    };
    if (key == "label") {
      if (!v.is_string()) throw bad("expected a string");
      c.label = v.get<std::string>();
    } else if (key == "beta") fixed(v, c.beta);
    else if (key == "eta_true") fixed(v, c.eta_true);
    else if (key == "sigma2") c.sigma2 = number(v);
    else if (key == "sigma2_b") c.sigma2_b = number(v);
    else if (key == "mu_w") c.mu_w = number(v);
    else if (key == "sigma2_w") c.sigma2_w = number(v);
    else if (key == "n") c.n = count(v);
    else if (key == "reps") c.reps = count(v);
    else if (key == "seed") c.seed = count(v);
    else if (key == "alpha") c.alpha = number(v);
    else if (key == "misspecify_propensity") c.misspecify_propensity = flag(v);
    else if (key == "misspecify_outcome") c.misspecify_outcome = flag(v);
    else if (key == "regenerate_degenerate") c.regenerate_degenerate = flag(v);
    else if (key == "clip_eps") c.clip_eps = number(v);
    else if (key == "oracle_pairs") c.oracle_pairs = count(v);
    else if (key == "link") {
      if (!v.is_string()) throw bad("expected \"probit\" or \"logit\"");
      try {
        c.link = link_from_string(v.get<std::string>());
      } catch (const Error& e) {
        throw bad(e.what());
      }
    } else if (key == "delta_weighting") {
      std::string s = v.is_string() ? v.get<std::string>() : "";
      if (s == "uniform") c.delta_weighting = DeltaWeighting::uniform;
      else if (s == "working_variance") c.delta_weighting = DeltaWeighting::working_variance;
      else throw bad("expected \"uniform\" or \"working_variance\"");
    } else if (key == "noise") {
      std::string s = v.is_string() ? v.get<std::string>() : "";
      if (s == "centered_chisq") c.noise = NoiseFamily::centered_chisq;
      else if (s == "normal") c.noise = NoiseFamily::normal;
      else throw bad("expected \"centered_chisq\" or \"normal\"");
    } else if (key == "estimators") {
      if (!v.is_array()) throw bad("expected an array of estimator names");
      c.estimators.clear();
      for (const auto& e : v) {
        if (!e.is_string()) throw bad("expected estimator names");
        try {
          c.estimators.push_back(estimator_from_string(e.get<std::string>()));
        } catch (const Error& err) {
          throw bad(err.what());
        }
      }
    } else {
      throw bad("unknown field");
    }
  }
  c.validate();
  return c;
}

//---------------------------------------------------------------------------//
// Study summaries
//---------------------------------------------------------------------------//

inline json summary_to_json(const StudySummary& s) {
  json j;
  j["scenario"] = scenario_to_json(s.config);
  j["true_delta"] = s.true_delta;
  j["true_gamma"] = s.true_gamma;
  j["reps_used"] = s.reps_used;
  j["failures"] = s.failures;
  j["regenerations"] = s.regenerations;
  j["failure_messages"] = s.failure_messages;
  json est = json::array();
  for (const auto& e : s.estimators) {
    json x;
    x["estimator"] = lower_name(e.kind);
    x["label"] = e.label;
    x["count"] = e.count;
    x["mean"] = e.mean;
    x["mean_ase"] = e.mean_ase;
    x["ese"] = e.ese;
    x["rejection_rate"] = e.rejection_rate;
    x["percent_bias"] = e.percent_bias;
    json coefs = json::array();
    for (const auto& c : e.coefficients)
      coefs.push_back({{"name", c.name},
                       {"mean", c.mean},
                       {"mean_ase", c.mean_ase},
                       {"ese", c.ese},
                       {"plugin_mean", c.plugin_mean}});
    x["coefficients"] = coefs;
    est.push_back(std::move(x));
  }
  j["estimators"] = est;
  return j;
}

namespace detail {

inline std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  // "-0.000" reads badly in a table
  if (std::string(buf) == "-0.000") return "0.000";
  return buf;
}

inline std::string cell(double mean, double ase, double ese) {
  return fixed3(mean) + " (" + fixed3(ase) + "/" + fixed3(ese) + ")";
}

}  // namespace detail

/**
 * Aligned text table: one block per scenario, one row per estimator with
 * "mean (ASE/ESE)" cells for each coefficient and delta, then the rejection
 * rate of H0: delta = 0.5 and the percent bias against the true delta.
 */
inline std::string format_study_table(const std::vector<StudySummary>& studies) {
  static const std::vector<std::string> columns{"eta0",    "eta1_w1",    "gamma0",
                                                "gamma11_w1", "gamma10_w1", "delta"};
  std::ostringstream out;
  for (std::size_t s = 0; s < studies.size(); ++s) {
    const auto& st = studies[s];
    if (s) out << '\n';
    out << st.config.label << "  (n=" << st.config.n << ", reps used " << st.reps_used
        << "/" << st.config.reps << ", true delta " << detail::fixed3(st.true_delta)
        << ")\n";
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"estimator", "eta0", "eta1", "gamma0", "gamma11", "gamma10", "delta",
                    "reject", "%bias"});
    for (const auto& e : st.estimators) {
      std::vector<std::string> row{e.label};
      for (std::size_t c = 0; c + 1 < columns.size(); ++c) {
        std::string text = "";
        for (const auto& co : e.coefficients)
          if (co.name == columns[c]) text = detail::cell(co.mean, co.mean_ase, co.ese);
        row.push_back(text);
      }
      row.push_back(detail::cell(e.mean, e.mean_ase, e.ese));
      row.push_back(detail::fixed3(e.rejection_rate));
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.1f%%", e.percent_bias);
      row.push_back(buf);
      rows.push_back(std::move(row));
    }
    std::vector<std::size_t> width(rows.front().size(), 0);
    for (const auto& r : rows)
      for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    for (const auto& r : rows) {
      std::string line;
      for (std::size_t c = 0; c < r.size(); ++c) {
        line += r[c];
        if (c + 1 < r.size()) line += std::string(width[c] - r[c].size() + 2, ' ');
      }
      while (!line.empty() && line.back() == ' ') line.pop_back();
      out << line << '\n';
    }
  }
  return out.str();
}

//---------------------------------------------------------------------------//
// Estimation reports
//---------------------------------------------------------------------------//

inline json wald_to_json(const WaldResult& w) {
  return {{"estimate", w.estimate}, {"se", w.se},         {"null", w.null_value},
          {"alpha", w.alpha},       {"z", w.z},           {"p_value", w.p_value},
          {"ci_lo", w.ci_lo},       {"ci_hi", w.ci_hi},   {"reject", w.reject}};
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline json fit_to_json(const UgeeFit& fit) {
  json j;
  j["family"] = to_string(fit.spec.family);
  j["parameters"] = fit.names;
  json theta = json::array(), se = json::array(), init = json::array();
  for (Eigen::Index k = 0; k < fit.theta_hat.size(); ++k) {
    theta.push_back(fit.theta_hat[k]);
    se.push_back(fit.se[k]);
    init.push_back(fit.initial_theta[k]);
  }
  j["theta_hat"] = theta;
  j["se"] = se;
  j["plugin_theta"] = init;
  j["covariance"] = matrix_to_json(fit.Sigma_theta / static_cast<double>(fit.n));
  j["plain_delta"] = fit.plain_delta;
  j["solver"] = {{"converged", fit.converged},
                 {"iterations", fit.iterations},
                 {"max_abs_score", fit.max_abs_score},
                 {"derivative_check_error", fit.derivative_check_error},
                 {"derivative_check_passed", fit.derivative_check_passed}};
  j["clipped"] = fit.clipped;
  j["warnings"] = fit.warnings;
  return j;
}

}  // namespace drmww
