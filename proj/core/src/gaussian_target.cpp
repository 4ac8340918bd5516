#include "lrvb/gaussian_target.hpp"

#include <cmath>

#include <Eigen/Cholesky>

#include "lrvb/errors.hpp"

namespace lrvb {
namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

GaussianTargetModel::GaussianTargetModel(Eigen::VectorXd mean, Eigen::MatrixXd cov, ScaleCoordinates scale)
    : mean_(std::move(mean)), cov_(std::move(cov)), layout_(scale) {
  const Eigen::Index d = mean_.size();
  if (d == 0 || cov_.rows() != d || cov_.cols() != d)
    throw ParameterError("gaussian target: mean and covariance dimensions disagree");
  if (!cov_.isApprox(cov_.transpose(), 0.0)) throw ParameterError("gaussian target: covariance must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(cov_);
  if (llt.info() != Eigen::Success) throw ParameterError("gaussian target: covariance must be positive definite");
  precision_ = llt.solve(Eigen::MatrixXd::Identity(d, d));
  precision_ = 0.5 * (precision_ + precision_.transpose()).eval();
  log_det_cov_ = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  for (Eigen::Index i = 0; i < d; ++i) {
    const std::string n = "theta_" + std::to_string(i + 1);
    layout_.add_1d(n);
    alpha_names_.push_back("mean_" + std::to_string(i + 1));
  }
}

template <class T>
T GaussianTargetModel::expected_log_prior_t(std::span<const T> xi, std::span<const T> alpha) const {
  const Eigen::Index d = mean_.size();
  std::vector<T> diff(static_cast<std::size_t>(d));
  std::vector<T> var(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < d; ++i) {
    const GaussianFactor1D<T> f = layout_.factor_1d(xi, static_cast<std::size_t>(i));
    diff[static_cast<std::size_t>(i)] = f.mean - alpha[static_cast<std::size_t>(i)];
    var[static_cast<std::size_t>(i)] = f.variance();
  }
  T quad = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto si = static_cast<std::size_t>(i);
    quad += precision_(i, i) * (diff[si] * diff[si] + var[si]);
    for (Eigen::Index j = i + 1; j < d; ++j) quad += 2.0 * precision_(i, j) * diff[si] * diff[static_cast<std::size_t>(j)];
  }
  return -0.5 * (static_cast<double>(d) * kLog2Pi + log_det_cov_) - 0.5 * quad;
}

template <class T>
T GaussianTargetModel::kl_t(std::span<const T> xi, std::span<const T> alpha) const {
  return -expected_log_prior_t(xi, alpha) - layout_.total_entropy(xi);
}

double GaussianTargetModel::log_joint(std::span<const double> theta, std::span<const double> alpha) const {
  check_alpha(alpha);
  const Eigen::Index d = mean_.size();
  Eigen::VectorXd diff(d);
  for (Eigen::Index i = 0; i < d; ++i)
    diff[i] = theta[static_cast<std::size_t>(i)] - alpha[static_cast<std::size_t>(i)];
  return -0.5 * (static_cast<double>(d) * kLog2Pi + log_det_cov_) - 0.5 * diff.dot(precision_ * diff);
}

std::vector<double> GaussianTargetModel::initial_xi() const {
  std::vector<double> xi(layout_.xi_dim());
  for (Eigen::Index i = 0; i < mean_.size(); ++i)
    layout_.set_factor(xi, static_cast<std::size_t>(i), GaussianFactor1D<double>{0.0, 0.0});
  return xi;
}

std::vector<double> GaussianTargetModel::optimum_xi() const {
  std::vector<double> xi(layout_.xi_dim());
  for (Eigen::Index i = 0; i < mean_.size(); ++i)
    layout_.set_factor(xi, static_cast<std::size_t>(i), factor_from_moments(mean_[i], 1.0 / precision_(i, i)));
  return xi;
}

#define LRVB_INSTANTIATE(T)                                                                        \
  template T GaussianTargetModel::kl_t<T>(std::span<const T>, std::span<const T>) const; \
  template T GaussianTargetModel::expected_log_prior_t<T>(std::span<const T>, std::span<const T>) const;

LRVB_INSTANTIATE(double)
LRVB_INSTANTIATE(HyperDual)
LRVB_INSTANTIATE(long double)
LRVB_INSTANTIATE(HyperDualLD)
#undef LRVB_INSTANTIATE

}  // namespace lrvb
