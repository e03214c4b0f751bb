// drmww: estimate the Mann-Whitney causal effect on CSV data, or run the
// simulation scenarios.
//
//   drmww estimate --input data.csv --z treat --y score --w age,bmi --estimator all
//   drmww simulate --table2 --n 200 --reps 1000 --seed 7 --format table
//   drmww simulate --scenario scenarios/null_n200.json --threads 8

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "drmww/drmww.hpp"

namespace {

using drmww::json;

const char* kind_name(drmww::ErrorKind k) {
  switch (k) {
    case drmww::ErrorKind::validation: return "validation";
    case drmww::ErrorKind::estimability: return "estimability";
    case drmww::ErrorKind::convergence: return "convergence";
    case drmww::ErrorKind::io: return "io";
  }
  return "error";
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw drmww::IoError("cannot open output file '" + path + "'");
  out << text;
  if (!out) throw drmww::IoError("failed writing output file '" + path + "'");
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

//---------------------------------------------------------------------------//
// estimate
//---------------------------------------------------------------------------//

struct EstimateArgs {
  std::string input;
  std::string z = "z", y = "y", id;
  std::vector<std::string> w;
  std::string outcome = "continuous";
  std::string estimator = "all";
  std::string link = "probit";
  std::string ties = "auto";
  std::string delta_weighting = "uniform";
  double alpha = 0.05;
  double clip_eps = drmww::kDefaultClipEps;
  bool hajek = false;
  bool intercept_only = false;
  bool constant_g = false;
  std::string output;
  std::string format = "json";
};

std::vector<drmww::EstimatorKind> requested(const std::string& s) {
  using drmww::EstimatorKind;
  if (s == "all")
    return {EstimatorKind::mww, EstimatorKind::ipw, EstimatorKind::msi, EstimatorKind::dr};
  return {drmww::estimator_from_string(s)};
}

int cmd_estimate(const EstimateArgs& a) {
  drmww::CsvSchema schema;
  schema.z_col = a.z;
  schema.y_col = a.y;
  schema.w_cols = a.w;
  if (!a.id.empty()) schema.id_col = a.id;
  schema.outcome_kind =
      a.outcome == "count" ? drmww::OutcomeKind::count : drmww::OutcomeKind::continuous;
  const auto kinds = requested(a.estimator);
  if (!(a.alpha > 0 && a.alpha < 1))
    throw drmww::Error(drmww::ErrorKind::validation, "--alpha must lie in (0, 1)");
  if (!(a.clip_eps > 0 && a.clip_eps < 0.5))
    throw drmww::Error(drmww::ErrorKind::validation, "--clip-eps must lie in (0, 0.5)");

  const drmww::Dataset data = drmww::load_csv(a.input, schema);
  drmww::require_both_arms(data, "estimate");
  bool ties = a.ties == "on";
  if (a.ties == "auto") ties = data.outcome_kind() == drmww::OutcomeKind::count;
  ties = drmww::use_ties(data, ties);

  json report;
  report["input"] = a.input;
  report["n"] = data.size();
  report["n_treated"] = data.n_treated();
  report["n_control"] = data.n_control();
  report["dropped_rows"] = data.dropped_rows();
  report["covariates"] = a.w;
  report["ties"] = ties;
  report["link"] = a.link;
  report["alpha"] = a.alpha;
  json estimates = json::array();
  std::ostringstream table;
  table << "n = " << data.size() << " (treated " << data.n_treated() << ", control "
        << data.n_control() << ", dropped " << data.dropped_rows() << ")\n";
  table << "estimator   delta   se      z       p       (1-alpha) CI\n";

  for (auto kind : kinds) {
    json e;
    e["estimator"] = drmww::lower_name(kind);
    double delta = 0, se = 0;
    if (kind == drmww::EstimatorKind::mww) {
      drmww::EstimatorOptions opts{ties, false};
      auto r = drmww::mww_estimate(data, opts);
      delta = r.delta_hat;
      se = *r.se;
      e["notes"] = r.notes;
    } else {
      drmww::FrmSpec spec;
      spec.family = kind == drmww::EstimatorKind::ipw   ? drmww::FrmFamily::ipw
                    : kind == drmww::EstimatorKind::msi ? drmww::FrmFamily::msi
                                                        : drmww::FrmFamily::dr;
      spec.link = drmww::link_from_string(a.link);
      spec.ties = ties;
      spec.clip_eps = a.clip_eps;
      spec.propensity_intercept_only = a.intercept_only;
      spec.gpi_constant_only = a.constant_g;
      spec.covariate_names = a.w;
      spec.delta_weighting = a.delta_weighting == "working_variance"
                                 ? drmww::DeltaWeighting::working_variance
                                 : drmww::DeltaWeighting::uniform;
      auto fit = drmww::solve_ugee(data, spec);
      delta = fit.delta();
      se = fit.delta_se();
      e["fit"] = drmww::fit_to_json(fit);
      if (a.hajek && kind != drmww::EstimatorKind::msi) {
        // Hajek-normalized plug-in estimate at the joint eta
        drmww::PropensityModel pm;
        pm.eta = fit.theta_hat.segment(static_cast<Eigen::Index>(fit.layout.eta_offset),
                                       static_cast<Eigen::Index>(fit.layout.eta_dim));
        pm.intercept_only = spec.propensity_intercept_only;
        pm.clip_eps = spec.clip_eps;
        drmww::EstimatorOptions opts{ties, true};
        drmww::EstimateResult r;
        if (kind == drmww::EstimatorKind::ipw) {
          r = drmww::ipw_estimate(data, pm, opts);
        } else {
          drmww::GpiModel gm;
          gm.link = spec.link;
          gm.constant_only = spec.gpi_constant_only;
          gm.gamma = fit.theta_hat.segment(static_cast<Eigen::Index>(fit.layout.gamma_offset),
                                           static_cast<Eigen::Index>(fit.layout.gamma_dim));
          r = drmww::dr_estimate(data, pm, gm, opts);
        }
        e["hajek_delta"] = r.delta_hat;
      }
      e["notes"] = fit.warnings;
    }
    auto w = drmww::wald_test(delta, se, 0.5, a.alpha);
    e["delta"] = delta;
    e["se"] = se;
    e["test"] = drmww::wald_to_json(w);
    estimates.push_back(e);

    std::string label = drmww::to_string(kind);
    label.resize(10, ' ');
    table << label << "  " << fmt(delta) << "  " << fmt(se) << "  " << fmt(w.z, 3) << "  "
          << fmt(w.p_value) << "  [" << fmt(w.ci_lo) << ", " << fmt(w.ci_hi) << "]\n";
  }
  report["estimates"] = estimates;
  write_output(a.output, a.format == "table" ? table.str() : report.dump(2) + "\n");
  return 0;
}

//---------------------------------------------------------------------------//
// simulate
//---------------------------------------------------------------------------//

struct SimulateArgs {
  std::vector<std::string> scenarios;
  bool table2 = false, table3 = false, table4 = false, table5 = false;
  std::vector<std::size_t> n;
  std::size_t reps = 1000;
  bool reps_given = false;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  std::string output;
  std::string format = "json";
};

std::vector<drmww::ScenarioConfig> build_scenarios(const SimulateArgs& a) {
  std::vector<drmww::ScenarioConfig> out;
  const int presets = a.table2 + a.table3 + a.table4 + a.table5;
  if (presets > 1)
    throw drmww::Error(drmww::ErrorKind::validation, "choose one of --table2..--table5");
  if (presets == 1 && !a.scenarios.empty())
    throw drmww::Error(drmww::ErrorKind::validation,
                       "--scenario cannot be combined with a table preset");
  if (presets == 0 && a.scenarios.empty())
    throw drmww::Error(drmww::ErrorKind::validation,
                       "simulate needs --scenario FILE or one of --table2..--table5");

  for (const auto& path : a.scenarios) {
    std::ifstream in(path);
    if (!in) throw drmww::IoError("cannot open scenario file '" + path + "'");
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw drmww::Error(drmww::ErrorKind::validation,
                         "scenario file '" + path + "' is not valid JSON: " + e.what());
    }
    if (a.seed) j["seed"] = *a.seed;
    if (a.reps_given) j["reps"] = a.reps;
    if (!j.contains("seed"))
      throw drmww::Error(drmww::ErrorKind::validation,
                         "scenario '" + path + "' has no seed; pass --seed");
    if (a.n.empty()) {
      out.push_back(drmww::scenario_from_json(j));
    } else {
      for (auto n : a.n) {
        j["n"] = n;
        out.push_back(drmww::scenario_from_json(j));
      }
    }
  }
  if (presets == 0) return out;

  if (!a.seed)
    throw drmww::Error(drmww::ErrorKind::validation, "simulate requires --seed");
  std::vector<std::size_t> sizes = a.n;
  if (sizes.empty())
    sizes = (a.table3 || a.table4) ? std::vector<std::size_t>{400}
                                   : std::vector<std::size_t>{50, 200, 400};
  for (auto n : sizes) {
    if (a.table2) out.push_back(drmww::preset_null(n, a.reps, *a.seed));
    if (a.table3 || a.table4) {
      if (a.table4) out.push_back(drmww::preset_null(n, a.reps, *a.seed));
      for (auto& c : drmww::preset_single_misspecification(n, a.reps, *a.seed))
        out.push_back(c);
    }
    if (a.table5) out.push_back(drmww::preset_power(n, a.reps, *a.seed));
  }
  for (const auto& c : out) c.validate();
  return out;
}

int cmd_simulate(const SimulateArgs& a) {
  auto scenarios = build_scenarios(a);
  std::vector<drmww::StudySummary> studies;
  for (const auto& c : scenarios) studies.push_back(drmww::run_study(c, a.threads));
  std::string text;
  if (a.format == "table") {
    text = drmww::format_study_table(studies);
  } else {
    json j;
    j["studies"] = json::array();
    for (const auto& s : studies) j["studies"].push_back(drmww::summary_to_json(s));
    text = j.dump(2) + "\n";
  }
  write_output(a.output, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Doubly robust Mann-Whitney causal effect estimation"};
  app.require_subcommand(1);

  EstimateArgs est;
  auto* e = app.add_subcommand("estimate", "Estimate delta = P(y1 <= y0) on CSV data");
  e->add_option("--input,-i", est.input, "CSV file with a header row")->required();
  e->add_option("--z", est.z, "Treatment column (0/1)");
  e->add_option("--y", est.y, "Outcome column");
  e->add_option("--w", est.w, "Covariate columns, comma separated")->delimiter(',');
  e->add_option("--id", est.id, "Optional subject id column");
  e->add_option("--outcome", est.outcome, "continuous or count")
      ->check(CLI::IsMember({"continuous", "count"}));
  e->add_option("--estimator", est.estimator, "mww, ipw, msi, dr or all")
      ->check(CLI::IsMember({"mww", "ipw", "msi", "dr", "all"}));
  e->add_option("--link", est.link, "GPI link")->check(CLI::IsMember({"probit", "logit"}));
  e->add_option("--ties", est.ties, "Half-tie kernel")
      ->check(CLI::IsMember({"auto", "on", "off"}));
  e->add_option("--alpha", est.alpha, "Test level");
  e->add_option("--clip-eps", est.clip_eps, "Propensity clip bound");
  e->add_flag("--hajek", est.hajek, "Also report the Hajek-normalized plug-in estimate");
  e->add_flag("--intercept-only-propensity", est.intercept_only,
              "Force an intercept-only propensity model");
  e->add_flag("--constant-g", est.constant_g, "Force a constant-only outcome model");
  e->add_option("--delta-weighting", est.delta_weighting, "Delta equation weights")
      ->check(CLI::IsMember({"uniform", "working_variance"}));
  e->add_option("--output,-o", est.output, "Output file (default stdout)");
  e->add_option("--format", est.format)->check(CLI::IsMember({"json", "table"}));

  SimulateArgs sim;
  std::uint64_t seed = 0;
  auto* s = app.add_subcommand("simulate", "Run replicated simulation studies");
  s->add_option("--scenario", sim.scenarios, "Scenario JSON file (repeatable)");
  s->add_flag("--table2", sim.table2, "Null scenario, both models correct");
  s->add_flag("--table3", sim.table3, "One working model misspecified");
  s->add_flag("--table4", sim.table4, "Percent bias: null plus misspecified runs");
  s->add_flag("--table5", sim.table5, "Power under beta1 = 1");
  s->add_option("--n", sim.n, "Sample size(s)")->delimiter(',');
  auto* reps_opt = s->add_option("--reps", sim.reps, "Replications");
  auto* seed_opt = s->add_option("--seed", seed, "Base seed (required)");
  s->add_option("--threads", sim.threads, "Worker threads (default: all cores)");
  s->add_option("--output,-o", sim.output, "Output file (default stdout)");
  s->add_option("--format", sim.format)->check(CLI::IsMember({"json", "table"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::CallForAllHelp& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& err) {
    std::cerr << "error[validation]: " << err.what() << "\n";
    return static_cast<int>(drmww::ErrorKind::validation);
  }

  try {
    if (e->parsed()) return cmd_estimate(est);
    if (seed_opt->count() > 0) sim.seed = seed;
    sim.reps_given = reps_opt->count() > 0;
    return cmd_simulate(sim);
  } catch (const drmww::Error& err) {
    std::cerr << "error[" << kind_name(err.kind()) << "]: " << err.what() << "\n";
    return err.exit_code();
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
}
