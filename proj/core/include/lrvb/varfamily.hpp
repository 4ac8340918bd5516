#pragma once

// Gaussian variational factors in unconstrained coordinates, and the layout
// that flattens a product of factors into one coordinate vector ξ.

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lrvb/dualnum.hpp"

namespace lrvb {

/// How a factor's scale coordinates are stored in ξ. kLog is the default
/// (log sd, log of Cholesky diagonal). kLinear stores sd / Cholesky diagonal
/// directly and exists to check reparameterization invariance.
enum class ScaleCoordinates { kLog, kLinear };

template <class T>
struct GaussianFactor1D {
  T mean;
  T log_sd;

  T sd() const {
    return exp(log_sd);
  }
  T variance() const {
    return exp(2.0 * log_sd);
  }
};

/// Lower Cholesky factor L = [[l11, 0], [l21, l22]] with the diagonal kept in logs.
template <class T>
struct GaussianFactor2D {
  std::array<T, 2> mean;
  T log_l11;
  T l21;
  T log_l22;
};

template <class T>
struct Moments2D {
  std::array<T, 2> mean;
  T cov11, cov12, cov22;
};

inline double gaussian_entropy_constant(int dim) {
  return 0.5 * dim * std::log(2.0 * std::numbers::pi * std::numbers::e);
}

template <class T>
T entropy(const GaussianFactor1D<T>& f) {
  return gaussian_entropy_constant(1) + f.log_sd;
}

template <class T>
T entropy(const GaussianFactor2D<T>& f) {
  return gaussian_entropy_constant(2) + f.log_l11 + f.log_l22;
}

template <class T>
std::array<T, 2> moments(const GaussianFactor1D<T>& f) {
  return {f.mean, f.variance()};
}

template <class T>
Moments2D<T> moments(const GaussianFactor2D<T>& f) {
  const T l11 = exp(f.log_l11);
  const T l22 = exp(f.log_l22);
  return {f.mean, l11 * l11, l11 * f.l21, f.l21 * f.l21 + l22 * l22};
}

GaussianFactor1D<double> factor_from_moments(double mean, double variance);
/// Inverse of moments(): Cholesky of an SPD 2×2 covariance.
GaussianFactor2D<double> factor_from_moments(const std::array<double, 2>& mean, const Eigen::Matrix2d& cov);

enum class FactorKind { kGaussian1D, kGaussian2D };

struct FactorSlot {
  std::string name;
  FactorKind kind;
  std::size_t offset;                    // first ξ coordinate
  std::size_t size;                      // 2 for 1-D factors, 5 for 2-D
  std::vector<std::size_t> theta_index;  // θ entries this factor covers
};

/// Maps ξ onto an ordered list of factors and E_q[θ] onto θ names.
/// 1-D factor coordinates: (mean, scale). 2-D: (mean₁, mean₂, l11, l21, l22).
class CoordinateLayout {
 public:
  explicit CoordinateLayout(ScaleCoordinates scale = ScaleCoordinates::kLog) : scale_(scale) {}

  std::size_t add_1d(const std::string& theta_name);
  std::size_t add_2d(const std::string& name, const std::string& theta_a, const std::string& theta_b);

  ScaleCoordinates scale() const noexcept { return scale_; }
  std::size_t xi_dim() const noexcept { return xi_dim_; }
  std::size_t theta_dim() const noexcept { return theta_names_.size(); }
  const std::vector<FactorSlot>& slots() const noexcept { return slots_; }
  const std::vector<std::string>& theta_names() const noexcept { return theta_names_; }
  std::vector<std::string> xi_names() const;
  std::size_t theta_index(const std::string& name) const;

  template <class T>
  GaussianFactor1D<T> factor_1d(std::span<const T> xi, std::size_t slot) const {
    const FactorSlot& s = slots_[slot];
    return {xi[s.offset], read_log_scale(xi[s.offset + 1])};
  }

  template <class T>
  GaussianFactor2D<T> factor_2d(std::span<const T> xi, std::size_t slot) const {
    const FactorSlot& s = slots_[slot];
    const std::size_t o = s.offset;
    return {{xi[o], xi[o + 1]}, read_log_scale(xi[o + 2]), xi[o + 3], read_log_scale(xi[o + 4])};
  }

  template <class T>
  T total_entropy(std::span<const T> xi) const {
    T acc = 0.0;
    for (std::size_t k = 0; k < slots_.size(); ++k) {
      if (slots_[k].kind == FactorKind::kGaussian1D)
        acc += entropy(factor_1d(xi, k));
      else
        acc += entropy(factor_2d(xi, k));
    }
    return acc;
  }

  /// E_q[θ]: the mean coordinates of every factor, in θ order.
  template <class T>
  std::vector<T> theta_mean(std::span<const T> xi) const {
    std::vector<T> out(theta_dim());
    for (const FactorSlot& s : slots_)
      for (std::size_t j = 0; j < s.theta_index.size(); ++j) out[s.theta_index[j]] = xi[s.offset + j];
    return out;
  }

  /// Block-diagonal covariance of θ under q.
  Eigen::MatrixXd mfvb_covariance(std::span<const double> xi) const;

  /// Writes ξ for a factor's moments into `xi`.
  void set_factor(std::span<double> xi, std::size_t slot, const GaussianFactor1D<double>& f) const;
  void set_factor(std::span<double> xi, std::size_t slot, const GaussianFactor2D<double>& f) const;

  /// Re-expresses ξ (laid out like this layout) in another scale convention.
  std::vector<double> convert(std::span<const double> xi, ScaleCoordinates to) const;

  /// Contiguous, disjoint, covering ranges; each θ owned by exactly one factor.
  void validate() const;

 private:
  void claim_name(const std::string& name) const;
  template <class T>
  T read_log_scale(const T& c) const {
    return scale_ == ScaleCoordinates::kLog ? c : log(c);
  }
  double write_scale(double log_value) const {
    return scale_ == ScaleCoordinates::kLog ? log_value : std::exp(log_value);
  }

  ScaleCoordinates scale_;
  std::vector<FactorSlot> slots_;
  std::vector<std::string> theta_names_;
  std::size_t xi_dim_ = 0;
};

}  // namespace lrvb
