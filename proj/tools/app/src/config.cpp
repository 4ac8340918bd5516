#include "lrvb_app/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "lrvb/conjugate_normal.hpp"
#include "lrvb/dataset.hpp"
#include "lrvb/errors.hpp"
#include "lrvb/gaussian_target.hpp"

namespace lrvb::app {
namespace {

void check_object(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw SchemaError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      std::string list;
      for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
      throw SchemaError(where + ": unknown key '" + key + "' (allowed: " + list + ")");
    }
  }
}

double number(const Json& v, const std::string& where) {
  if (!v.is_number()) throw SchemaError(where + ": expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw SchemaError(where + ": expected a finite number");
  return x;
}

std::uint64_t count(const Json& v, const std::string& where) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    throw SchemaError(where + ": expected a non-negative integer");
  return v.get<std::uint64_t>();
}

std::vector<double> number_list(const Json& v, const std::string& where) {
  if (!v.is_array()) throw SchemaError(where + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json vector_json(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(x);
  return a;
}

}  // namespace

Json truth_to_json(const ModelParameters& p) {
  Json j;
  j["mu"] = p.mu;
  j["tau"] = p.tau;
  j["mu_k"] = vector_json(p.mu_k);
  j["tau_k"] = vector_json(p.tau_k);
  j["log_sigma2_inv"] = vector_json(p.log_sigma2_inv);
  j["log_s1"] = p.log_s1;
  j["log_s2"] = p.log_s2;
  j["z_rho"] = p.z_rho;
  return j;
}

ModelParameters truth_from_json(const Json& j, std::size_t sites) {
  check_object(j, "truth", {"mu", "tau", "mu_k", "tau_k", "log_sigma2_inv", "log_s1", "log_s2", "z_rho"});
  ModelParameters p = default_truth(sites);
  auto scalar = [&](const char* key, double& dst) {
    if (j.contains(key)) dst = number(j[key], std::string("truth.") + key);
  };
  auto per_site = [&](const char* key, std::vector<double>& dst, bool broadcast) {
    if (!j.contains(key)) return;
    const std::string where = std::string("truth.") + key;
    if (broadcast && j[key].is_number()) {
      dst.assign(sites, number(j[key], where));
      return;
    }
    std::vector<double> v = number_list(j[key], where);
    if (v.size() != sites)
      throw SchemaError(where + ": expected " + std::to_string(sites) + " entries, got " + std::to_string(v.size()));
    dst = std::move(v);
  };
  scalar("mu", p.mu);
  scalar("tau", p.tau);
  per_site("mu_k", p.mu_k, false);
  per_site("tau_k", p.tau_k, false);
  per_site("log_sigma2_inv", p.log_sigma2_inv, true);
  scalar("log_s1", p.log_s1);
  scalar("log_s2", p.log_s2);
  scalar("z_rho", p.z_rho);
  return p;
}

RunConfig parse_config(const Json& j) {
  check_object(j, "config",
               {"model", "prior", "optimizer", "quadrature_nodes", "directions", "mcmc", "seed", "conjugate",
                "gaussian_target", "truth"});
  RunConfig c;
  if (j.contains("model")) {
    if (!j["model"].is_string()) throw SchemaError("model: expected a string");
    c.model = j["model"].get<std::string>();
    if (c.model != "microcredit" && c.model != "conjugate_normal" && c.model != "gaussian_target")
      throw SchemaError("model: unknown model '" + c.model + "' (allowed: microcredit, conjugate_normal, gaussian_target)");
  }
  if (j.contains("prior")) {
    if (!j["prior"].is_object()) throw SchemaError("prior: expected an object");
    for (const auto& [key, value] : j["prior"].items()) c.prior[key] = number(value, "prior." + key);
  }
  if (j.contains("optimizer")) {
    const Json& o = j["optimizer"];
    check_object(o, "optimizer", {"grad_tol", "step_tol", "max_iterations"});
    if (o.contains("grad_tol")) c.optimizer.grad_tol = number(o["grad_tol"], "optimizer.grad_tol");
    if (o.contains("step_tol")) c.optimizer.step_tol = number(o["step_tol"], "optimizer.step_tol");
    if (o.contains("max_iterations"))
      c.optimizer.max_iterations = static_cast<int>(count(o["max_iterations"], "optimizer.max_iterations"));
    if (!(c.optimizer.grad_tol > 0.0) || !(c.optimizer.step_tol > 0.0))
      throw SchemaError("optimizer: tolerances must be positive");
    if (c.optimizer.max_iterations < 1) throw SchemaError("optimizer.max_iterations: must be at least 1");
  }
  if (j.contains("quadrature_nodes")) {
    c.quadrature_nodes = count(j["quadrature_nodes"], "quadrature_nodes");
    if (c.quadrature_nodes < 1) throw SchemaError("quadrature_nodes: must be at least 1");
  }
  if (j.contains("directions")) {
    const Json& d = j["directions"];
    if (!d.is_array()) throw SchemaError("directions: expected an array");
    for (std::size_t i = 0; i < d.size(); ++i) {
      const std::string where = "directions[" + std::to_string(i) + "]";
      if (d[i].is_string()) {
        c.directions.push_back({d[i].get<std::string>(), std::nullopt});
        continue;
      }
      check_object(d[i], where, {"name", "weights"});
      if (!d[i].contains("name") || !d[i]["name"].is_string()) throw SchemaError(where + ".name: expected a string");
      DirectionSpec spec{d[i]["name"].get<std::string>(), std::map<std::string, double>{}};
      if (!d[i].contains("weights") || !d[i]["weights"].is_object())
        throw SchemaError(where + ".weights: expected an object");
      for (const auto& [key, value] : d[i]["weights"].items())
        (*spec.weights)[key] = number(value, where + ".weights." + key);
      c.directions.push_back(std::move(spec));
    }
  }
  if (j.contains("mcmc")) {
    const Json& m = j["mcmc"];
    check_object(m, "mcmc", {"draws", "warmup", "thin"});
    if (m.contains("draws")) c.mcmc.draws = count(m["draws"], "mcmc.draws");
    if (m.contains("warmup")) c.mcmc.warmup = count(m["warmup"], "mcmc.warmup");
    if (m.contains("thin")) c.mcmc.thin = count(m["thin"], "mcmc.thin");
    if (c.mcmc.draws < 1 || c.mcmc.thin < 1) throw SchemaError("mcmc: draws and thin must be at least 1");
  }
  if (j.contains("seed")) c.seed = count(j["seed"], "seed");
  if (j.contains("conjugate")) {
    check_object(j["conjugate"], "conjugate", {"noise_sd"});
    if (j["conjugate"].contains("noise_sd")) c.noise_sd = number(j["conjugate"]["noise_sd"], "conjugate.noise_sd");
    if (!(c.noise_sd > 0.0)) throw SchemaError("conjugate.noise_sd: must be positive");
  }
  if (j.contains("gaussian_target")) {
    const Json& g = j["gaussian_target"];
    check_object(g, "gaussian_target", {"mean", "cov"});
    if (!g.contains("mean") || !g.contains("cov")) throw SchemaError("gaussian_target: needs mean and cov");
    const std::vector<double> mean = number_list(g["mean"], "gaussian_target.mean");
    const auto d = static_cast<Eigen::Index>(mean.size());
    if (d == 0) throw SchemaError("gaussian_target.mean: must not be empty");
    if (!g["cov"].is_array() || static_cast<Eigen::Index>(g["cov"].size()) != d)
      throw SchemaError("gaussian_target.cov: expected a square matrix matching the mean");
    GaussianTargetSpec spec{Eigen::Map<const Eigen::VectorXd>(mean.data(), d), Eigen::MatrixXd(d, d)};
    for (Eigen::Index r = 0; r < d; ++r) {
      const std::vector<double> row = number_list(g["cov"][static_cast<std::size_t>(r)], "gaussian_target.cov");
      if (static_cast<Eigen::Index>(row.size()) != d)
        throw SchemaError("gaussian_target.cov: expected a square matrix matching the mean");
      for (Eigen::Index col = 0; col < d; ++col) spec.cov(r, col) = row[static_cast<std::size_t>(col)];
    }
    c.gaussian_target = std::move(spec);
  }
  if (j.contains("truth")) {
    // Site count comes from the per-site vectors when present.
    std::size_t sites = 7;
    for (const char* key : {"mu_k", "tau_k", "log_sigma2_inv"})
      if (j["truth"].is_object() && j["truth"].contains(key) && j["truth"][key].is_array()) sites = j["truth"][key].size();
    c.truth = truth_from_json(j["truth"], sites);
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path + "'", 0);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

LoadedModel load_model(const RunConfig& config, const std::optional<std::string>& data_path) {
  LoadedModel out;
  if (config.model == "gaussian_target") {
    if (!config.gaussian_target) throw SchemaError("gaussian_target model needs a gaussian_target section");
    out.model = std::make_unique<GaussianTargetModel>(config.gaussian_target->mean, config.gaussian_target->cov);
  } else {
    if (!data_path) throw ValidationError("a data file is required for model '" + config.model + "'", 0);
    MicrocreditDataset data = read_dataset_csv_file(*data_path);
    out.rows = data.size();
    out.sites = data.num_sites();
    if (config.model == "microcredit") {
      // Single-arm sites only matter to the site-level model.
      out.warnings = data.warnings();
      out.model = std::make_unique<MicrocreditModel>(std::move(data), MicrocreditOptions{config.quadrature_nodes});
    } else {
      std::vector<double> y;
      for (const Observation& r : data.rows()) y.push_back(r.outcome);
      out.model = std::make_unique<ConjugateNormalModel>(std::move(y), config.noise_sd);
    }
  }
  out.alpha = out.model->default_alpha();
  for (const auto& [key, value] : config.prior) out.alpha[out.model->alpha_index(key)] = value;
  if (config.model == "microcredit") {
    PriorParams::from_alpha(out.alpha).validate();
  } else if (config.model == "conjugate_normal") {
    if (!(out.alpha[1] > 0.0)) throw ParameterError("prior_precision must be positive");
  }
  return out;
}

std::pair<Eigen::MatrixXd, std::vector<std::string>> resolve_directions(const RunConfig& config,
                                                                         const VariationalModel& model) {
  const auto m = static_cast<Eigen::Index>(model.alpha_names().size());
  std::vector<DirectionSpec> specs = config.directions;
  if (specs.empty()) specs.push_back({"all", std::nullopt});
  std::vector<Eigen::VectorXd> cols;
  std::vector<std::string> names;
  for (const DirectionSpec& s : specs) {
    if (!s.weights && s.name == "all") {
      for (Eigen::Index i = 0; i < m; ++i) {
        cols.push_back(Eigen::VectorXd::Unit(m, i));
        names.push_back(model.alpha_names()[static_cast<std::size_t>(i)]);
      }
      continue;
    }
    Eigen::VectorXd v = Eigen::VectorXd::Zero(m);
    if (!s.weights) {
      v[static_cast<Eigen::Index>(model.alpha_index(s.name))] = 1.0;
    } else {
      for (const auto& [key, w] : *s.weights) v[static_cast<Eigen::Index>(model.alpha_index(key))] = w;
    }
    cols.push_back(std::move(v));
    names.push_back(s.name);
  }
  Eigen::MatrixXd d(m, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) d.col(static_cast<Eigen::Index>(i)) = cols[i];
  return {d, names};
}

Json echo_config(const RunConfig& config, const VariationalModel& model, std::span<const double> alpha) {
  Json j;
  j["model"] = config.model;
  Json prior = Json::object();
  for (std::size_t i = 0; i < alpha.size(); ++i) prior[model.alpha_names()[i]] = alpha[i];
  j["prior"] = prior;
  j["optimizer"] = {{"grad_tol", config.optimizer.grad_tol},
                    {"step_tol", config.optimizer.step_tol},
                    {"max_iterations", config.optimizer.max_iterations}};
  j["quadrature_nodes"] = config.quadrature_nodes;
  Json dirs = Json::array();
  for (const DirectionSpec& s : config.directions) {
    if (!s.weights) {
      dirs.push_back(s.name);
    } else {
      Json w = Json::object();
      for (const auto& [key, value] : *s.weights) w[key] = value;
      dirs.push_back({{"name", s.name}, {"weights", w}});
    }
  }
  if (config.directions.empty()) dirs.push_back("all");
  j["directions"] = dirs;
  j["mcmc"] = {{"draws", config.mcmc.draws}, {"warmup", config.mcmc.warmup}, {"thin", config.mcmc.thin}};
  j["seed"] = config.seed;
  if (config.model == "conjugate_normal") j["conjugate"] = {{"noise_sd", config.noise_sd}};
  if (config.gaussian_target) {
    Json mean = Json::array();
    for (Eigen::Index i = 0; i < config.gaussian_target->mean.size(); ++i) mean.push_back(config.gaussian_target->mean[i]);
    j["gaussian_target"] = {{"mean", mean}, {"cov", matrix_json(config.gaussian_target->cov)}};
  }
  if (config.truth) j["truth"] = truth_to_json(*config.truth);
  return j;
}

}  // namespace lrvb::app
