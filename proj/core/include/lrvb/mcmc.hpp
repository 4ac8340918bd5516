#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lrvb/model.hpp"

namespace lrvb {

using LogDensity = std::function<double(std::span<const double>)>;

struct McmcOptions {
  std::size_t draws = 20000;  // retained post-warmup draws
  std::size_t warmup = 5000;
  std::size_t thin = 10;      // iterations per retained draw
  double initial_scale = 0.1;  // initial proposal sd, isotropic
  /// Optional starting covariance estimate (e.g. Σ̂ from linear response);
  /// when set the first proposal is (2.38²/d)·initial_cov instead.
  std::optional<Eigen::MatrixXd> initial_cov;
  std::uint64_t seed = 1;
};

struct ChainResult {
  Eigen::MatrixXd draws;              // draws × dim, unconstrained
  Eigen::MatrixXd constrained_draws;  // same rows, constrained view
  std::vector<std::string> names;
  std::vector<std::string> constrained_names;
  double acceptance_rate = 0.0;       // post-warmup
  Eigen::VectorXd means;
  Eigen::VectorXd sds;
  Eigen::VectorXd mcse;               // batch means, floor(√n) batches
  Eigen::MatrixXd proposal_cov;       // frozen after warmup
  std::uint64_t seed = 0;
  double wall_time = 0.0;
};

/// Adaptive random-walk Metropolis. During warmup the Gaussian proposal
/// covariance is re-estimated on doubling windows as (2.38²/d)·Cov(draws);
/// it is frozen afterwards. Deterministic given options.seed.
/// Throws DiagnosticsError if no warmup proposal is accepted.
ChainResult sample(const LogDensity& log_density, std::vector<double> start, const McmcOptions& options);

/// Samples the model's log_joint at α, starting from `start` (unconstrained θ).
ChainResult sample(const VariationalModel& model, std::span<const double> alpha, std::vector<double> start,
                   const McmcOptions& options);

/// Batch-means Monte Carlo standard error with floor(√n) batches.
double batch_means_mcse(std::span<const double> series);

struct ComparisonRow {
  std::string name;
  double vb_mean;
  double mcmc_mean;
  double mcmc_mcse;
  double mfvb_sd;
  double lrvb_sd;
  double mcmc_sd;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  double max_abs_mean_z = 0.0;       // max |vb − mcmc| / mcse
  double max_rel_lrvb_sd_error = 0.0;
  double max_rel_mfvb_sd_error = 0.0;
};

/// Row-wise VB vs MCMC comparison. Throws SchemaError on empty chains or
/// mismatched parameter layouts.
ComparisonTable compare(const std::vector<std::string>& names, const Eigen::VectorXd& vb_mean,
                        const Eigen::VectorXd& mfvb_sd, const Eigen::VectorXd& lrvb_sd, const ChainResult& chain);

/// Constrained draws as CSV with a header row of parameter names.
void write_draws_csv(std::ostream& out, const ChainResult& chain);

}  // namespace lrvb
