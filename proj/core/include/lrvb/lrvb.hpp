#pragma once

// Linear response for mean-field VB.
//
// Everything lives in the unconstrained coordinates ξ of the variational
// factors. With H = ∂²KL/∂ξ∂ξᵀ at the optimum and J = ∂E_q[θ]/∂ξ:
//
//   covariance       Σ̂ = J H⁻¹ Jᵀ
//   prior sensitivity  dE_q[θ]/dαᵀ = J H⁻¹ ∂²ℓ/∂ξ∂αᵀ      (KL contains −ℓ)
//   perturbation KL + t·f(ξ):  dE_q[θ]/dt = −J H⁻¹ ∇_ξ f
//
// H is factorized once (LLT) and reused for every solve.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "lrvb/model.hpp"

namespace lrvb {

struct LrvbSolution {
  Eigen::MatrixXd hessian;          // over ξ
  Eigen::MatrixXd moment_jacobian;  // rows θ, columns ξ
  Eigen::MatrixXd lrvb_cov;         // Σ̂
  Eigen::MatrixXd mfvb_cov;         // block-diagonal q covariance
  Eigen::LLT<Eigen::MatrixXd> factor;

  Eigen::VectorXd lrvb_sd() const { return lrvb_cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }
  Eigen::VectorXd mfvb_sd() const { return mfvb_cov.diagonal().cwiseSqrt(); }
};

struct SensitivityReport {
  Eigen::MatrixXd raw;         // raw(i, j) = dE_q[θ_i] along direction j
  Eigen::MatrixXd normalized;  // row i divided by the LRVB sd of θ_i
  std::vector<std::string> direction_names;
  std::vector<std::string> theta_names;
};

/// Exact KL Hessian over ξ. Throws SingularityError on non-finite entries.
Eigen::MatrixXd kl_hessian(const VariationalModel& model, std::span<const double> alpha,
                           std::span<const double> xi_star);

/// ∂E_q[θ]/∂ξ.
Eigen::MatrixXd moment_jacobian(const VariationalModel& model, std::span<const double> xi_star);

/// Σ̂ together with the pieces that produced it. Throws SingularityError when
/// the Hessian is not positive definite (the fit did not converge).
LrvbSolution lrvb_covariance(const VariationalModel& model, std::span<const double> alpha,
                             std::span<const double> xi_star);

/// ∂²ℓ/∂ξ∂αᵀ, shape (dim ξ) × (dim α).
Eigen::MatrixXd cross_hessian(const VariationalModel& model, std::span<const double> alpha,
                              std::span<const double> xi_star);

/// Unit direction for a named α entry. Off-diagonal symmetric entries such as
/// lambda_12 already stand for both mirrored elements.
Eigen::VectorXd unit_direction(const VariationalModel& model, const std::string& alpha_name);

/// Sensitivity of E_q[θ] along each column of `directions` (dim α × count).
SensitivityReport prior_sensitivity(const VariationalModel& model, std::span<const double> alpha,
                                    std::span<const double> xi_star, const LrvbSolution& solution,
                                    const Eigen::MatrixXd& directions, std::vector<std::string> direction_names);

/// All unit directions, named after α.
SensitivityReport prior_sensitivity(const VariationalModel& model, std::span<const double> alpha,
                                    std::span<const double> xi_star, const LrvbSolution& solution);

/// A perturbation term f(ξ) added to the KL as KL + t·f.
using Perturbation = std::function<HyperDual(std::span<const HyperDual>)>;

/// dE_{q_t}[θ]/dt at t = 0 for the objective KL + t·f.
Eigen::VectorXd perturbation_sensitivity(std::span<const double> xi_star, const LrvbSolution& solution,
                                         const Perturbation& f);

/// f(ξ) = wᵀE_q[θ].
Perturbation linear_moment_perturbation(const VariationalModel& model, Eigen::VectorXd weights);

}  // namespace lrvb
