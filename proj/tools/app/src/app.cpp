#include "lrvb_app/app.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "lrvb/dataset.hpp"
#include "lrvb/errors.hpp"
#include "lrvb/lrvb.hpp"
#include "lrvb/mcmc.hpp"
#include "lrvb/optimize.hpp"
#include "lrvb_app/config.hpp"

namespace lrvb::app {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct CommonArgs {
  std::optional<std::string> data;
  std::optional<std::string> config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::string format = "json";
};

void add_common(CLI::App* cmd, CommonArgs& a, bool data = true) {
  if (data) cmd->add_option("data", a.data, "Input CSV with header site,treatment,outcome");
  cmd->add_option("--config", a.config, "JSON run configuration");
  cmd->add_option("--out", a.out, "Write the report here instead of stdout");
  cmd->add_option("--seed", a.seed, "Override the configured seed");
  cmd->add_option("--format", a.format, "Report format")->check(CLI::IsMember({"json", "csv"}));
}

RunConfig resolve_config(const CommonArgs& a) {
  RunConfig c = a.config ? load_config(*a.config) : RunConfig{};
  if (a.seed) c.seed = *a.seed;
  return c;
}

// Writes to --out when given, else to the command's output stream.
void emit(const CommonArgs& a, std::ostream& out, const std::string& text) {
  if (a.out) {
    std::ofstream f(*a.out, std::ios::binary);
    if (!f) throw ValidationError("cannot write '" + *a.out + "'", 0);
    f << text;
    if (!f) throw ValidationError("failed writing '" + *a.out + "'", 0);
  } else {
    out << text;
  }
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

OptimizerOptions optimizer_options(const RunConfig& c) {
  OptimizerOptions o;
  o.grad_tol = c.optimizer.grad_tol;
  o.step_tol = c.optimizer.step_tol;
  o.max_iterations = c.optimizer.max_iterations;
  return o;
}

McmcOptions mcmc_options(const RunConfig& c) {
  McmcOptions o;
  o.draws = c.mcmc.draws;
  o.warmup = c.mcmc.warmup;
  o.thin = c.mcmc.thin;
  o.seed = c.seed;
  return o;
}

// fit → Σ̂ → sensitivities, timed separately.
struct Analysis {
  LoadedModel loaded;
  FitResult fit;
  std::optional<LrvbSolution> solution;
  std::optional<SensitivityReport> sensitivity;
  Eigen::VectorXd mean;
  double fit_seconds = 0.0;
  double lrvb_seconds = 0.0;
  double sensitivity_seconds = 0.0;
};

Analysis analyze(const RunConfig& config, const std::optional<std::string>& data, bool sensitivities, std::ostream& err) {
  Analysis a;
  a.loaded = load_model(config, data);
  for (const std::string& w : a.loaded.warnings) err << "warning: " << w << "\n";
  const VariationalModel& model = *a.loaded.model;
  const std::vector<double>& alpha = a.loaded.alpha;
  // Resolve directions before the fit so bad names fail fast.
  auto [directions, names] = resolve_directions(config, model);

  auto t0 = Clock::now();
  a.fit = lrvb::fit(model, alpha, std::nullopt, optimizer_options(config));
  a.fit_seconds = seconds_since(t0);
  const std::vector<double> m = model.layout().theta_mean(std::span<const double>(a.fit.xi_star));
  a.mean = Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
  if (!a.fit.converged) return a;

  t0 = Clock::now();
  a.solution = lrvb_covariance(model, alpha, a.fit.xi_star);
  a.lrvb_seconds = seconds_since(t0);
  if (sensitivities) {
    t0 = Clock::now();
    a.sensitivity = prior_sensitivity(model, alpha, a.fit.xi_star, *a.solution, directions, names);
    a.sensitivity_seconds = seconds_since(t0);
  }
  return a;
}

Json diagnostics_json(const FitResult& f) {
  Json j;
  j["converged"] = f.converged;
  j["message"] = f.message;
  j["iterations"] = f.iterations;
  j["polish_steps"] = f.polish_steps;
  j["kl_value"] = f.kl_value;
  j["grad_norm"] = f.grad_norm;
  j["final_step"] = f.final_step;
  j["kl_trace"] = f.kl_trace;
  return j;
}

Json data_json(const LoadedModel& l) {
  return {{"rows", l.rows}, {"sites", l.sites}, {"warnings", l.warnings}};
}

int fit_command(const CommonArgs& args, std::ostream& out, std::ostream& err) {
  const RunConfig config = resolve_config(args);
  const auto total0 = Clock::now();
  Analysis a = analyze(config, args.data, true, err);
  const VariationalModel& model = *a.loaded.model;
  const std::vector<std::string> names = model.layout().theta_names();

  Json r;
  r["command"] = "fit";
  r["model"] = std::string(model.name());
  r["converged"] = a.fit.converged;
  r["diagnostics"] = diagnostics_json(a.fit);
  r["data"] = data_json(a.loaded);
  Json params = Json::array();
  for (std::size_t i = 0; i < names.size(); ++i) {
    Json p;
    p["name"] = names[i];
    p["mean"] = a.mean[static_cast<Eigen::Index>(i)];
    if (a.solution) {
      p["mfvb_sd"] = a.solution->mfvb_sd()[static_cast<Eigen::Index>(i)];
      p["lrvb_sd"] = a.solution->lrvb_sd()[static_cast<Eigen::Index>(i)];
    }
    params.push_back(std::move(p));
  }
  r["parameters"] = params;
  if (a.solution) r["lrvb_covariance"] = {{"names", names}, {"matrix", matrix_json(a.solution->lrvb_cov)}};
  if (a.sensitivity)
    r["sensitivity"] = {{"directions", a.sensitivity->direction_names},
                        {"parameters", a.sensitivity->theta_names},
                        {"raw", matrix_json(a.sensitivity->raw)},
                        {"normalized", matrix_json(a.sensitivity->normalized)}};
  r["timings"] = {{"fit_seconds", a.fit_seconds},
                  {"lrvb_seconds", a.lrvb_seconds},
                  {"sensitivity_seconds", a.sensitivity_seconds},
                  {"total_seconds", seconds_since(total0)}};
  r["config"] = echo_config(config, model, a.loaded.alpha);

  if (args.format == "csv") {
    std::ostringstream s;
    s << "name,mean,mfvb_sd,lrvb_sd\n";
    for (std::size_t i = 0; i < names.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      s << names[i] << ',' << fmt(a.mean[k]) << ','
        << (a.solution ? fmt(a.solution->mfvb_sd()[k]) : "") << ','
        << (a.solution ? fmt(a.solution->lrvb_sd()[k]) : "") << '\n';
    }
    emit(args, out, s.str());
  } else {
    emit(args, out, dump(r));
  }
  if (!a.fit.converged) {
    err << "error: optimizer did not converge: " << a.fit.message << "\n";
    return kNotConverged;
  }
  return kOk;
}

std::string default_target(const VariationalModel& model) {
  const auto names = model.layout().theta_names();
  for (const auto& n : names)
    if (n == "tau") return n;
  return names.front();
}

std::size_t theta_index(const VariationalModel& model, const std::string& name) {
  const auto names = model.layout().theta_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  std::string list;
  for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
  throw ParameterError("unknown target '" + name + "' (valid: " + list + ")");
}

int sensitivity_command(const CommonArgs& args, const std::optional<std::string>& param,
                        const std::optional<std::string>& target_arg, std::ostream& out, std::ostream& err) {
  RunConfig config = resolve_config(args);
  if (param) config.directions = {DirectionSpec{*param, std::nullopt}};
  const auto total0 = Clock::now();
  Analysis a = analyze(config, args.data, true, err);
  const VariationalModel& model = *a.loaded.model;
  const std::string target = target_arg ? *target_arg : default_target(model);
  const auto t = static_cast<Eigen::Index>(theta_index(model, target));
  if (!a.fit.converged) {
    err << "error: optimizer did not converge: " << a.fit.message << "\n";
    return kNotConverged;
  }
  const SensitivityReport& s = *a.sensitivity;

  Json r;
  r["command"] = "sensitivity";
  r["model"] = std::string(model.name());
  r["target"] = target;
  r["target_mean"] = a.mean[t];
  r["target_lrvb_sd"] = a.solution->lrvb_sd()[t];
  Json rows = Json::array();
  for (std::size_t j = 0; j < s.direction_names.size(); ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    rows.push_back({{"parameter", s.direction_names[j]}, {"raw", s.raw(t, c)}, {"normalized", s.normalized(t, c)}});
  }
  r["rows"] = rows;
  r["diagnostics"] = diagnostics_json(a.fit);
  r["timings"] = {{"fit_seconds", a.fit_seconds},
                  {"lrvb_seconds", a.lrvb_seconds},
                  {"sensitivity_seconds", a.sensitivity_seconds},
                  {"total_seconds", seconds_since(total0)}};
  r["config"] = echo_config(config, model, a.loaded.alpha);

  if (args.format == "csv") {
    std::ostringstream o;
    o << "parameter,raw,normalized\n";
    for (std::size_t j = 0; j < s.direction_names.size(); ++j) {
      const auto c = static_cast<Eigen::Index>(j);
      o << s.direction_names[j] << ',' << fmt(s.raw(t, c)) << ',' << fmt(s.normalized(t, c)) << '\n';
    }
    emit(args, out, o.str());
  } else {
    emit(args, out, dump(r));
  }
  return kOk;
}

int manual_perturb_command(const CommonArgs& args, const std::string& param, double delta, bool with_mcmc,
                           std::ostream& out, std::ostream& err) {
  RunConfig config = resolve_config(args);
  config.directions = {DirectionSpec{param, std::nullopt}};
  const auto total0 = Clock::now();
  Analysis a = analyze(config, args.data, true, err);
  const VariationalModel& model = *a.loaded.model;
  if (!a.fit.converged) {
    err << "error: optimizer did not converge: " << a.fit.message << "\n";
    return kNotConverged;
  }
  const std::size_t p = model.alpha_index(param);
  std::vector<double> alpha2 = a.loaded.alpha;
  alpha2[p] += delta;
  if (config.model == "microcredit") PriorParams::from_alpha(alpha2).validate();

  const auto t0 = Clock::now();
  const FitResult refit = lrvb::fit(model, alpha2, a.fit.xi_star, optimizer_options(config));
  const double refit_seconds = seconds_since(t0);
  if (!refit.converged) {
    err << "error: refit at the perturbed prior did not converge: " << refit.message << "\n";
    return kNotConverged;
  }
  const std::vector<double> m2 = model.layout().theta_mean(std::span<const double>(refit.xi_star));
  const Eigen::VectorXd predicted = a.sensitivity->raw.col(0) * delta;
  const Eigen::VectorXd sd = a.solution->lrvb_sd();
  const std::vector<std::string> names = model.layout().theta_names();

  std::optional<ChainResult> chain_a, chain_b;
  double mcmc_seconds = 0.0;
  if (with_mcmc) {
    McmcOptions mo = mcmc_options(config);
    mo.initial_cov = a.solution->lrvb_cov;
    const auto tm = Clock::now();
    std::vector<double> start(a.mean.data(), a.mean.data() + a.mean.size());
    chain_a = sample(model, a.loaded.alpha, start, mo);
    chain_b = sample(model, alpha2, start, mo);
    mcmc_seconds = seconds_since(tm);
  }

  Json rows = Json::array();
  double max_rel = 0.0;
  std::ostringstream csv;
  csv << "name,base_mean,predicted_shift,actual_shift,relative_error" << (with_mcmc ? ",mcmc_shift,mcmc_shift_se" : "")
      << '\n';
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double actual = m2[i] - a.mean[k];
    const bool checked = std::abs(actual) > 1e-4 * sd[k];
    const double rel = checked ? std::abs(actual - predicted[k]) / std::abs(actual) : 0.0;
    if (checked) max_rel = std::max(max_rel, rel);
    Json row;
    row["name"] = names[i];
    row["base_mean"] = a.mean[k];
    row["predicted_shift"] = predicted[k];
    row["actual_shift"] = actual;
    row["relative_error"] = checked ? Json(rel) : Json(nullptr);
    csv << names[i] << ',' << fmt(a.mean[k]) << ',' << fmt(predicted[k]) << ',' << fmt(actual) << ','
        << (checked ? fmt(rel) : "");
    if (with_mcmc) {
      const double shift = chain_b->means[k] - chain_a->means[k];
      const double se = std::hypot(chain_a->mcse[k], chain_b->mcse[k]);
      row["mcmc_shift"] = shift;
      row["mcmc_shift_se"] = se;
      csv << ',' << fmt(shift) << ',' << fmt(se);
    }
    csv << '\n';
    rows.push_back(std::move(row));
  }

  Json r;
  r["command"] = "manual-perturb";
  r["model"] = std::string(model.name());
  r["parameter"] = param;
  r["delta"] = delta;
  r["rows"] = rows;
  r["summary"] = {{"max_relative_error", max_rel}, {"checked_threshold_sd", 1e-4}};
  r["diagnostics"] = {{"base", diagnostics_json(a.fit)}, {"perturbed", diagnostics_json(refit)}};
  r["timings"] = {{"fit_seconds", a.fit_seconds},
                  {"lrvb_seconds", a.lrvb_seconds + a.sensitivity_seconds},
                  {"refit_seconds", refit_seconds},
                  {"mcmc_seconds", mcmc_seconds},
                  {"total_seconds", seconds_since(total0)}};
  r["config"] = echo_config(config, model, a.loaded.alpha);
  emit(args, out, args.format == "csv" ? csv.str() : dump(r));
  return kOk;
}

int check_mcmc_command(const CommonArgs& args, const std::optional<std::string>& draws_path, std::ostream& out,
                       std::ostream& err) {
  const RunConfig config = resolve_config(args);
  const auto total0 = Clock::now();
  Analysis a = analyze(config, args.data, true, err);
  const VariationalModel& model = *a.loaded.model;
  if (!a.fit.converged) {
    err << "error: optimizer did not converge: " << a.fit.message << "\n";
    return kNotConverged;
  }
  const double vb_seconds = a.fit_seconds + a.lrvb_seconds + a.sensitivity_seconds;

  McmcOptions mo = mcmc_options(config);
  mo.initial_cov = a.solution->lrvb_cov;
  std::vector<double> start(a.mean.data(), a.mean.data() + a.mean.size());
  const ChainResult chain = sample(model, a.loaded.alpha, start, mo);
  const ComparisonTable table =
      compare(model.layout().theta_names(), a.mean, a.solution->mfvb_sd(), a.solution->lrvb_sd(), chain);

  if (draws_path) {
    std::ofstream f(*draws_path, std::ios::binary);
    if (!f) throw ValidationError("cannot write '" + *draws_path + "'", 0);
    write_draws_csv(f, chain);
  }

  Json rows = Json::array();
  std::ostringstream csv;
  csv << "name,vb_mean,mcmc_mean,mcmc_mcse,mfvb_sd,lrvb_sd,mcmc_sd\n";
  for (const ComparisonRow& row : table.rows) {
    rows.push_back({{"name", row.name},
                    {"vb_mean", row.vb_mean},
                    {"mcmc_mean", row.mcmc_mean},
                    {"mcmc_mcse", row.mcmc_mcse},
                    {"mfvb_sd", row.mfvb_sd},
                    {"lrvb_sd", row.lrvb_sd},
                    {"mcmc_sd", row.mcmc_sd}});
    csv << row.name << ',' << fmt(row.vb_mean) << ',' << fmt(row.mcmc_mean) << ',' << fmt(row.mcmc_mcse) << ','
        << fmt(row.mfvb_sd) << ',' << fmt(row.lrvb_sd) << ',' << fmt(row.mcmc_sd) << '\n';
  }

  Json r;
  r["command"] = "check-mcmc";
  r["model"] = std::string(model.name());
  r["rows"] = rows;
  r["summary"] = {{"max_abs_mean_z", table.max_abs_mean_z},
                  {"max_rel_lrvb_sd_error", table.max_rel_lrvb_sd_error},
                  {"max_rel_mfvb_sd_error", table.max_rel_mfvb_sd_error},
                  {"acceptance_rate", chain.acceptance_rate},
                  {"draws", config.mcmc.draws},
                  {"warmup", config.mcmc.warmup},
                  {"thin", config.mcmc.thin}};
  r["diagnostics"] = diagnostics_json(a.fit);
  r["timings"] = {{"vb_seconds", vb_seconds},
                  {"mcmc_seconds", chain.wall_time},
                  {"speed_ratio", vb_seconds > 0.0 ? chain.wall_time / vb_seconds : 0.0},
                  {"total_seconds", seconds_since(total0)}};
  r["config"] = echo_config(config, model, a.loaded.alpha);
  emit(args, out, args.format == "csv" ? csv.str() : dump(r));
  return kOk;
}

int simulate_command(const CommonArgs& args, std::size_t sites, std::size_t per_site,
                     const std::optional<std::string>& truth_path, const std::optional<std::string>& truth_out,
                     std::ostream& out) {
  if (sites < 1 || per_site < 1) throw ParameterError("--sites and --per-site must be at least 1");
  RunConfig config = resolve_config(args);
  if (truth_path) {
    RunConfig t = load_config(*truth_path);
    if (!t.truth) throw SchemaError("'" + *truth_path + "' has no truth section");
    config.truth = t.truth;
  }
  SimulationOptions so;
  so.sizes.assign(sites, per_site);
  so.seed = config.seed;
  ModelParameters truth = default_truth(sites);
  if (config.truth) {
    if (config.truth->num_sites() != sites)
      throw SchemaError("truth has " + std::to_string(config.truth->num_sites()) + " sites but --sites is " +
                        std::to_string(sites));
    truth = *config.truth;
  }
  auto [data, used] = simulate(truth, so);

  std::ostringstream s;
  if (args.format == "json") {
    Json rows = Json::array();
    for (const Observation& o : data.rows()) rows.push_back({o.site, o.treatment, o.outcome});
    s << dump(Json{{"columns", {"site", "treatment", "outcome"}}, {"rows", rows}});
  } else {
    write_dataset_csv(s, data);
  }
  emit(args, out, s.str());

  if (truth_out) {
    Json t;
    t["model"] = "microcredit";
    t["seed"] = config.seed;
    t["truth"] = truth_to_json(used);
    std::ofstream f(*truth_out, std::ios::binary);
    if (!f) throw ValidationError("cannot write '" + *truth_out + "'", 0);
    f << dump(t);
  }
  return kOk;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mean-field variational Bayes with linear response covariances and prior sensitivity"};
  app.name("lrvb");
  app.require_subcommand(1);

  CommonArgs fit_args, sens_args, perturb_args, mcmc_args, sim_args;
  auto* fit_cmd = app.add_subcommand("fit", "Fit, then report LRVB covariances and prior sensitivities");
  add_common(fit_cmd, fit_args);

  std::optional<std::string> sens_param, sens_target;
  auto* sens_cmd = app.add_subcommand("sensitivity", "Normalized sensitivity of one posterior mean");
  add_common(sens_cmd, sens_args);
  sens_cmd->add_option("--param", sens_param, "Prior parameter name, or 'all'");
  sens_cmd->add_option("--target", sens_target, "Posterior mean to report (default tau)");

  std::string perturb_param;
  double perturb_delta = 0.0;
  bool perturb_mcmc = false;
  auto* perturb_cmd = app.add_subcommand("manual-perturb", "Refit at a perturbed prior and compare with the prediction");
  add_common(perturb_cmd, perturb_args);
  perturb_cmd->add_option("--param", perturb_param, "Prior parameter to perturb")->required();
  perturb_cmd->add_option("--delta", perturb_delta, "Perturbation size")->required();
  perturb_cmd->add_flag("--mcmc", perturb_mcmc, "Also run MCMC at both priors");

  std::optional<std::string> draws_path;
  auto* mcmc_cmd = app.add_subcommand("check-mcmc", "Compare VB and LRVB against an MCMC run");
  add_common(mcmc_cmd, mcmc_args);
  mcmc_cmd->add_option("--save-draws", draws_path, "Write constrained draws as CSV");

  std::size_t sim_sites = 7, sim_per_site = 200;
  std::optional<std::string> truth_path, truth_out;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic multi-site dataset");
  add_common(sim_cmd, sim_args, false);
  sim_args.format = "csv";
  sim_cmd->add_option("--sites", sim_sites, "Number of sites");
  sim_cmd->add_option("--per-site", sim_per_site, "Rows per site");
  sim_cmd->add_option("--truth", truth_path, "Config file with a truth section");
  sim_cmd->add_option("--truth-out", truth_out, "Write the truth used as a config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*fit_cmd) return fit_command(fit_args, out, err);
    if (*sens_cmd) return sensitivity_command(sens_args, sens_param, sens_target, out, err);
    if (*perturb_cmd) return manual_perturb_command(perturb_args, perturb_param, perturb_delta, perturb_mcmc, out, err);
    if (*mcmc_cmd) return check_mcmc_command(mcmc_args, draws_path, out, err);
    if (*sim_cmd) return simulate_command(sim_args, sim_sites, sim_per_site, truth_path, truth_out, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const OptimizationError& e) {
    err << "error: " << e.what() << "\n";
    return kNotConverged;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kNumerical;
  }
  return kValidation;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> storage;
  storage.reserve(args.size() + 1);
  storage.emplace_back("lrvb");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (std::string& s : storage) argv.push_back(s.data());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace lrvb::app
