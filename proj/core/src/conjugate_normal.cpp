#include "lrvb/conjugate_normal.hpp"

#include <cmath>

#include "lrvb/errors.hpp"

namespace lrvb {
namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

ConjugateNormalModel::ConjugateNormalModel(std::vector<double> observations, double noise_sd, double prior_mean,
                                           double prior_precision, ScaleCoordinates scale)
    : y_(std::move(observations)),
      noise_sd_(noise_sd),
      prior_mean_(prior_mean),
      prior_precision_(prior_precision),
      layout_(scale) {
  if (y_.empty()) throw ValidationError("conjugate normal model needs at least one observation");
  if (!(noise_sd_ > 0.0)) throw ParameterError("noise_sd must be positive");
  if (!(prior_precision_ > 0.0)) throw ParameterError("prior_precision must be positive");
  for (double y : y_) sum_y_ += y;
  mean_y_ = sum_y_ / static_cast<double>(y_.size());
  for (double y : y_) sum_sq_dev_ += (y - mean_y_) * (y - mean_y_);
  layout_.add_1d("theta");
}

const std::vector<std::string>& ConjugateNormalModel::alpha_names() const {
  static const std::vector<std::string> kNames = {"prior_mean", "prior_precision"};
  return kNames;
}

template <class T>
T ConjugateNormalModel::expected_log_prior_t(std::span<const T> xi, std::span<const T> alpha) const {
  const GaussianFactor1D<T> q = layout_.factor_1d(xi, 0);
  const T& m0 = alpha[0];
  const T& lambda = alpha[1];
  return 0.5 * log(lambda) - 0.5 * kLog2Pi - 0.5 * lambda * (square(q.mean - m0) + q.variance());
}

template <class T>
T ConjugateNormalModel::kl_t(std::span<const T> xi, std::span<const T> alpha) const {
  const GaussianFactor1D<T> q = layout_.factor_1d(xi, 0);
  const double n = static_cast<double>(y_.size());
  const double prec = 1.0 / (noise_sd_ * noise_sd_);
  const T log_lik = n * (-0.5 * kLog2Pi - std::log(noise_sd_)) -
                    0.5 * prec * (sum_sq_dev_ + n * (square(mean_y_ - q.mean) + q.variance()));
  return -(log_lik + expected_log_prior_t(xi, alpha)) - entropy(q);
}

double ConjugateNormalModel::log_joint(std::span<const double> theta, std::span<const double> alpha) const {
  check_alpha(alpha);
  const double prec = 1.0 / (noise_sd_ * noise_sd_);
  double lp = 0.0;
  for (double y : y_) lp += -0.5 * kLog2Pi - std::log(noise_sd_) - 0.5 * prec * (y - theta[0]) * (y - theta[0]);
  lp += 0.5 * std::log(alpha[1]) - 0.5 * kLog2Pi - 0.5 * alpha[1] * (theta[0] - alpha[0]) * (theta[0] - alpha[0]);
  return lp;
}

std::vector<double> ConjugateNormalModel::initial_xi() const {
  std::vector<double> xi(layout_.xi_dim());
  layout_.set_factor(xi, 0, GaussianFactor1D<double>{mean_y_, 0.0});
  return xi;
}

std::pair<double, double> ConjugateNormalModel::posterior(std::span<const double> alpha) const {
  check_alpha(alpha);
  const double prec = static_cast<double>(y_.size()) / (noise_sd_ * noise_sd_) + alpha[1];
  const double mean = (alpha[1] * alpha[0] + sum_y_ / (noise_sd_ * noise_sd_)) / prec;
  return {mean, 1.0 / prec};
}

std::vector<double> ConjugateNormalModel::posterior_xi(std::span<const double> alpha) const {
  const auto [mean, var] = posterior(alpha);
  std::vector<double> xi(layout_.xi_dim());
  layout_.set_factor(xi, 0, factor_from_moments(mean, var));
  return xi;
}

#define LRVB_INSTANTIATE(T)                                                                        \
  template T ConjugateNormalModel::kl_t<T>(std::span<const T>, std::span<const T>) const; \
  template T ConjugateNormalModel::expected_log_prior_t<T>(std::span<const T>, std::span<const T>) const;

LRVB_INSTANTIATE(double)
LRVB_INSTANTIATE(HyperDual)
LRVB_INSTANTIATE(long double)
LRVB_INSTANTIATE(HyperDualLD)
#undef LRVB_INSTANTIATE

}  // namespace lrvb
