#include "lrvb/lrvb.hpp"

#include "lrvb/errors.hpp"

namespace lrvb {

Eigen::MatrixXd kl_hessian(const VariationalModel& model, std::span<const double> alpha,
                           std::span<const double> xi_star) {
  model.check_alpha(alpha);
  const std::vector<HyperDual> a = lift(alpha);
  Eigen::MatrixXd h;
  try {
    h = hessian([&](std::span<const HyperDual> xi) { return model.kl(xi, a); }, xi_star);
  } catch (const DomainError& e) {
    throw SingularityError(std::string("KL Hessian evaluation failed: ") + e.what());
  }
  if (!h.allFinite()) throw SingularityError("KL Hessian has non-finite entries");
  return h;
}

Eigen::MatrixXd moment_jacobian(const VariationalModel& model, std::span<const double> xi_star) {
  const CoordinateLayout& layout = model.layout();
  return jacobian([&](std::span<const HyperDual> xi) { return layout.theta_mean(xi); }, xi_star,
                  layout.theta_dim());
}

LrvbSolution lrvb_covariance(const VariationalModel& model, std::span<const double> alpha,
                             std::span<const double> xi_star) {
  LrvbSolution s;
  s.hessian = kl_hessian(model, alpha, xi_star);
  s.factor.compute(s.hessian);
  if (s.factor.info() != Eigen::Success)
    throw SingularityError("KL Hessian is not positive definite; the fit did not converge to a minimum");
  s.moment_jacobian = moment_jacobian(model, xi_star);
  // Σ̂ = J H⁻¹ Jᵀ = (L⁻¹Jᵀ)ᵀ(L⁻¹Jᵀ), symmetric and PSD by construction.
  const Eigen::MatrixXd half = s.factor.matrixL().solve(s.moment_jacobian.transpose());
  s.lrvb_cov = half.transpose() * half;
  s.mfvb_cov = model.layout().mfvb_covariance(xi_star);
  return s;
}

Eigen::MatrixXd cross_hessian(const VariationalModel& model, std::span<const double> alpha,
                              std::span<const double> xi_star) {
  model.check_alpha(alpha);
  return mixed_hessian(
      [&](std::span<const HyperDual> xi, std::span<const HyperDual> a) { return model.expected_log_prior(xi, a); },
      xi_star, alpha);
}

Eigen::VectorXd unit_direction(const VariationalModel& model, const std::string& alpha_name) {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.alpha_names().size()));
  d[static_cast<Eigen::Index>(model.alpha_index(alpha_name))] = 1.0;
  return d;
}

SensitivityReport prior_sensitivity(const VariationalModel& model, std::span<const double> alpha,
                                    std::span<const double> xi_star, const LrvbSolution& solution,
                                    const Eigen::MatrixXd& directions, std::vector<std::string> direction_names) {
  if (directions.rows() != static_cast<Eigen::Index>(model.alpha_names().size()))
    throw ParameterError("sensitivity directions must have one row per prior parameter");
  if (direction_names.size() != static_cast<std::size_t>(directions.cols()))
    throw ParameterError("sensitivity directions and names differ in count");
  const Eigen::MatrixXd cross = cross_hessian(model, alpha, xi_star);
  SensitivityReport r;
  r.raw = solution.moment_jacobian * solution.factor.solve(cross * directions);
  const Eigen::VectorXd sd = solution.lrvb_sd();
  r.normalized = r.raw;
  for (Eigen::Index i = 0; i < r.raw.rows(); ++i) r.normalized.row(i) /= sd[i];
  r.direction_names = std::move(direction_names);
  r.theta_names = model.layout().theta_names();
  return r;
}

SensitivityReport prior_sensitivity(const VariationalModel& model, std::span<const double> alpha,
                                    std::span<const double> xi_star, const LrvbSolution& solution) {
  const auto m = static_cast<Eigen::Index>(model.alpha_names().size());
  return prior_sensitivity(model, alpha, xi_star, solution, Eigen::MatrixXd::Identity(m, m), model.alpha_names());
}

Eigen::VectorXd perturbation_sensitivity(std::span<const double> xi_star, const LrvbSolution& solution,
                                         const Perturbation& f) {
  Eigen::VectorXd grad;
  try {
    grad = gradient(f, xi_star);
  } catch (const DomainError& e) {
    throw SingularityError(std::string("perturbation gradient failed: ") + e.what());
  }
  return -(solution.moment_jacobian * solution.factor.solve(grad));
}

Perturbation linear_moment_perturbation(const VariationalModel& model, Eigen::VectorXd weights) {
  const CoordinateLayout* layout = &model.layout();
  if (weights.size() != static_cast<Eigen::Index>(layout->theta_dim()))
    throw ParameterError("perturbation weights must have one entry per parameter");
  return [layout, weights = std::move(weights)](std::span<const HyperDual> xi) {
    const std::vector<HyperDual> m = layout->theta_mean(xi);
    HyperDual acc = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) acc += weights[static_cast<Eigen::Index>(i)] * m[i];
    return acc;
  };
}

}  // namespace lrvb
