#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "lrvb/model.hpp"

namespace lrvb {

/// Fixed multivariate normal "posterior" N(α, Σ) approximated by independent
/// Gaussians. α is the target mean, so the whole density plays the prior's role.
/// Mean-field optimum: exact means, variances 1/(Σ⁻¹)_ii.
class GaussianTargetModel final : public ModelBase<GaussianTargetModel> {
 public:
  GaussianTargetModel(Eigen::VectorXd mean, Eigen::MatrixXd cov, ScaleCoordinates scale = ScaleCoordinates::kLog);

  std::string_view name() const override { return "gaussian_target"; }
  const CoordinateLayout& layout() const override { return layout_; }
  const std::vector<std::string>& alpha_names() const override { return alpha_names_; }
  std::vector<double> default_alpha() const override { return {mean_.data(), mean_.data() + mean_.size()}; }
  double log_joint(std::span<const double> theta, std::span<const double> alpha) const override;
  std::vector<double> initial_xi() const override;

  const Eigen::MatrixXd& covariance() const noexcept { return cov_; }
  const Eigen::MatrixXd& precision() const noexcept { return precision_; }
  /// ξ of the analytic mean-field optimum.
  std::vector<double> optimum_xi() const;

  template <class T>
  T kl_t(std::span<const T> xi, std::span<const T> alpha) const;
  template <class T>
  T expected_log_prior_t(std::span<const T> xi, std::span<const T> alpha) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd precision_;
  double log_det_cov_ = 0.0;
  std::vector<std::string> alpha_names_;
  CoordinateLayout layout_;
};

}  // namespace lrvb
