#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "lrvb/microcredit.hpp"
#include "lrvb/model.hpp"

namespace lrvb::app {

using Json = nlohmann::ordered_json;

struct OptimizerConfig {
  double grad_tol = 1e-8;
  double step_tol = 1e-9;
  int max_iterations = 500;
};

struct McmcConfig {
  std::size_t draws = 20000;
  std::size_t warmup = 5000;
  std::size_t thin = 10;
};

/// A sensitivity direction: the unit vector of the prior parameter `name`, or
/// an explicit combination when `weights` is set.
struct DirectionSpec {
  std::string name;
  std::optional<std::map<std::string, double>> weights;
};

struct GaussianTargetSpec {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct RunConfig {
  std::string model = "microcredit";
  std::map<std::string, double> prior;  // overrides of the model defaults
  OptimizerConfig optimizer;
  std::size_t quadrature_nodes = 21;
  std::vector<DirectionSpec> directions;  // empty means every prior parameter
  McmcConfig mcmc;
  std::uint64_t seed = 42;
  double noise_sd = 1.0;  // conjugate_normal only
  std::optional<GaussianTargetSpec> gaussian_target;
  std::optional<ModelParameters> truth;
};

/// Parses a config object. Unknown keys and ill-typed values raise SchemaError
/// naming the offending key.
RunConfig parse_config(const Json& j);
RunConfig load_config(const std::string& path);

Json truth_to_json(const ModelParameters& p);
ModelParameters truth_from_json(const Json& j, std::size_t sites);

/// Model, data and α assembled from a config.
struct LoadedModel {
  std::unique_ptr<VariationalModel> model;
  std::vector<double> alpha;
  std::size_t rows = 0;
  std::size_t sites = 0;
  std::vector<std::string> warnings;
};

/// Builds the configured model. `data_path` is required for the data-driven
/// models and ignored for gaussian_target.
LoadedModel load_model(const RunConfig& config, const std::optional<std::string>& data_path);

/// Direction matrix (dim α × count) and names for the configured directions.
std::pair<Eigen::MatrixXd, std::vector<std::string>> resolve_directions(const RunConfig& config,
                                                                         const VariationalModel& model);

/// Fully resolved config: every field present, prior listed in model order.
Json echo_config(const RunConfig& config, const VariationalModel& model, std::span<const double> alpha);

}  // namespace lrvb::app
