#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lrvb/dualnum.hpp"
#include "lrvb/model.hpp"

namespace lrvb {

/// A smooth scalar objective evaluable in plain and hyper-dual arithmetic.
struct Objective {
  std::function<double(std::span<const double>)> value;
  std::function<HyperDual(std::span<const HyperDual>)> dual;
};

/// ξ ↦ kl(ξ, α) for a fixed α.
Objective kl_objective(const VariationalModel& model, std::span<const double> alpha);

struct OptimizerOptions {
  double grad_tol = 1e-8;  // ∞-norm
  double step_tol = 1e-9;  // ∞-norm
  int max_iterations = 500;
  double initial_radius = 1.0;
  double max_radius = 1e4;
};

struct FitResult {
  std::vector<double> xi_star;
  double kl_value = 0.0;
  double grad_norm = 0.0;   // ∞-norm at xi_star
  double final_step = 0.0;  // ∞-norm of the last (or next Newton) step
  int iterations = 0;       // Hessian evaluations
  int polish_steps = 0;     // Newton steps accepted below the rounding level of the objective
  bool converged = false;
  double wall_time = 0.0;   // seconds
  /// Objective after each accepted trust-region step, starting with the initial value.
  std::vector<double> kl_trace;
  std::string message;
};

/// Newton trust-region minimization with exact hyper-dual Hessians. Indefinite
/// Hessians are handled by an eigenvalue-shifted trust-region subproblem.
/// Throws OptimizationError when the objective is non-finite at x0 or stays
/// non-finite under every shrinking step.
FitResult minimize(const Objective& objective, std::vector<double> x0, const OptimizerOptions& options = {});

/// Minimizes the model KL at α, from `init` or the model's default start.
FitResult fit(const VariationalModel& model, std::span<const double> alpha,
              std::optional<std::vector<double>> init = std::nullopt, const OptimizerOptions& options = {});

}  // namespace lrvb
