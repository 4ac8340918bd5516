#pragma once

#include <span>
#include <vector>

#include "lrvb/model.hpp"

namespace lrvb {

/// Unknown mean θ with known noise sd and prior N(prior_mean, 1/prior_precision).
/// The posterior is Gaussian, so mean-field VB with one Gaussian factor is exact.
/// α = (prior_mean, prior_precision).
class ConjugateNormalModel final : public ModelBase<ConjugateNormalModel> {
 public:
  ConjugateNormalModel(std::vector<double> observations, double noise_sd, double prior_mean = 0.0,
                       double prior_precision = 1.0, ScaleCoordinates scale = ScaleCoordinates::kLog);

  std::string_view name() const override { return "conjugate_normal"; }
  const CoordinateLayout& layout() const override { return layout_; }
  const std::vector<std::string>& alpha_names() const override;
  std::vector<double> default_alpha() const override { return {prior_mean_, prior_precision_}; }
  double log_joint(std::span<const double> theta, std::span<const double> alpha) const override;
  std::vector<double> initial_xi() const override;

  /// Closed-form posterior (mean, variance) at the given α.
  std::pair<double, double> posterior(std::span<const double> alpha) const;
  /// ξ of the exact posterior.
  std::vector<double> posterior_xi(std::span<const double> alpha) const;

  double noise_sd() const noexcept { return noise_sd_; }
  const std::vector<double>& observations() const noexcept { return y_; }

  template <class T>
  T kl_t(std::span<const T> xi, std::span<const T> alpha) const;
  template <class T>
  T expected_log_prior_t(std::span<const T> xi, std::span<const T> alpha) const;

 private:
  std::vector<double> y_;
  double noise_sd_;
  double prior_mean_;
  double prior_precision_;
  double sum_y_ = 0.0;
  double sum_sq_dev_ = 0.0;
  double mean_y_ = 0.0;
  CoordinateLayout layout_;
};

}  // namespace lrvb
