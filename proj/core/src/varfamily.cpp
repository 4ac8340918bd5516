#include "lrvb/varfamily.hpp"

#include <algorithm>
#include <set>

#include "lrvb/errors.hpp"

namespace lrvb {

GaussianFactor1D<double> factor_from_moments(double mean, double variance) {
  if (!(variance > 0.0)) throw ParameterError("factor_from_moments: variance must be positive");
  return {mean, 0.5 * std::log(variance)};
}

GaussianFactor2D<double> factor_from_moments(const std::array<double, 2>& mean, const Eigen::Matrix2d& cov) {
  if (!(cov(0, 0) > 0.0)) throw ParameterError("factor_from_moments: covariance not positive definite");
  const double l11 = std::sqrt(cov(0, 0));
  const double l21 = cov(1, 0) / l11;
  const double rem = cov(1, 1) - l21 * l21;
  if (!(rem > 0.0)) throw ParameterError("factor_from_moments: covariance not positive definite");
  return {mean, std::log(l11), l21, 0.5 * std::log(rem)};
}

void CoordinateLayout::claim_name(const std::string& name) const {
  if (std::find(theta_names_.begin(), theta_names_.end(), name) != theta_names_.end())
    throw SchemaError("layout: parameter '" + name + "' already has a factor");
}

std::size_t CoordinateLayout::add_1d(const std::string& theta_name) {
  claim_name(theta_name);
  slots_.push_back({theta_name, FactorKind::kGaussian1D, xi_dim_, 2, {theta_names_.size()}});
  theta_names_.push_back(theta_name);
  xi_dim_ += 2;
  return slots_.size() - 1;
}

std::size_t CoordinateLayout::add_2d(const std::string& name, const std::string& theta_a,
                                     const std::string& theta_b) {
  claim_name(theta_a);
  claim_name(theta_b);
  if (theta_a == theta_b) throw SchemaError("layout: a 2-D factor needs two distinct parameters");
  slots_.push_back({name, FactorKind::kGaussian2D, xi_dim_, 5, {theta_names_.size(), theta_names_.size() + 1}});
  theta_names_.push_back(theta_a);
  theta_names_.push_back(theta_b);
  xi_dim_ += 5;
  return slots_.size() - 1;
}

std::vector<std::string> CoordinateLayout::xi_names() const {
  const char* scale_1d = scale_ == ScaleCoordinates::kLog ? "log_sd" : "sd";
  const char* diag = scale_ == ScaleCoordinates::kLog ? "log_l" : "l";
  std::vector<std::string> out;
  out.reserve(xi_dim_);
  for (const FactorSlot& s : slots_) {
    if (s.kind == FactorKind::kGaussian1D) {
      out.push_back(s.name + ".mean");
      out.push_back(s.name + "." + scale_1d);
    } else {
      out.push_back(s.name + ".mean1");
      out.push_back(s.name + ".mean2");
      out.push_back(s.name + "." + diag + "11");
      out.push_back(s.name + ".l21");
      out.push_back(s.name + "." + diag + "22");
    }
  }
  return out;
}

std::size_t CoordinateLayout::theta_index(const std::string& name) const {
  const auto it = std::find(theta_names_.begin(), theta_names_.end(), name);
  if (it == theta_names_.end()) throw ParameterError("unknown parameter '" + name + "'");
  return static_cast<std::size_t>(it - theta_names_.begin());
}

Eigen::MatrixXd CoordinateLayout::mfvb_covariance(std::span<const double> xi) const {
  const auto d = static_cast<Eigen::Index>(theta_dim());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t k = 0; k < slots_.size(); ++k) {
    const FactorSlot& s = slots_[k];
    if (s.kind == FactorKind::kGaussian1D) {
      const auto i = static_cast<Eigen::Index>(s.theta_index[0]);
      cov(i, i) = factor_1d(xi, k).variance();
    } else {
      const Moments2D<double> m = moments(factor_2d(xi, k));
      const auto a = static_cast<Eigen::Index>(s.theta_index[0]);
      const auto b = static_cast<Eigen::Index>(s.theta_index[1]);
      cov(a, a) = m.cov11;
      cov(a, b) = cov(b, a) = m.cov12;
      cov(b, b) = m.cov22;
    }
  }
  return cov;
}

void CoordinateLayout::set_factor(std::span<double> xi, std::size_t slot, const GaussianFactor1D<double>& f) const {
  const FactorSlot& s = slots_.at(slot);
  if (s.kind != FactorKind::kGaussian1D) throw ParameterError("set_factor: slot is not 1-D");
  xi[s.offset] = f.mean;
  xi[s.offset + 1] = write_scale(f.log_sd);
}

void CoordinateLayout::set_factor(std::span<double> xi, std::size_t slot, const GaussianFactor2D<double>& f) const {
  const FactorSlot& s = slots_.at(slot);
  if (s.kind != FactorKind::kGaussian2D) throw ParameterError("set_factor: slot is not 2-D");
  xi[s.offset] = f.mean[0];
  xi[s.offset + 1] = f.mean[1];
  xi[s.offset + 2] = write_scale(f.log_l11);
  xi[s.offset + 3] = f.l21;
  xi[s.offset + 4] = write_scale(f.log_l22);
}

std::vector<double> CoordinateLayout::convert(std::span<const double> xi, ScaleCoordinates to) const {
  CoordinateLayout target = *this;
  target.scale_ = to;
  std::vector<double> out(xi.begin(), xi.end());
  for (std::size_t k = 0; k < slots_.size(); ++k) {
    if (slots_[k].kind == FactorKind::kGaussian1D)
      target.set_factor(out, k, factor_1d(xi, k));
    else
      target.set_factor(out, k, factor_2d(xi, k));
  }
  return out;
}

void CoordinateLayout::validate() const {
  std::size_t next = 0;
  std::set<std::size_t> owned;
  for (const FactorSlot& s : slots_) {
    if (s.offset != next) throw SchemaError("layout: factor '" + s.name + "' is not contiguous");
    next += s.size;
    for (std::size_t t : s.theta_index) {
      if (t >= theta_dim() || !owned.insert(t).second)
        throw SchemaError("layout: parameter index " + std::to_string(t) + " owned twice or out of range");
    }
  }
  if (next != xi_dim_) throw SchemaError("layout: ranges do not cover the coordinate vector");
  if (owned.size() != theta_dim()) throw SchemaError("layout: some parameters have no factor");
}

}  // namespace lrvb
