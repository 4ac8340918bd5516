#pragma once

// Common interface for models whose posterior is approximated by a product of
// Gaussian factors. Every model writes its objective once, generic over the
// scalar type; ModelBase instantiates it for double and HyperDual.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lrvb/dualnum.hpp"
#include "lrvb/varfamily.hpp"

namespace lrvb {

class VariationalModel {
 public:
  virtual ~VariationalModel() = default;

  virtual std::string_view name() const = 0;
  virtual const CoordinateLayout& layout() const = 0;
  /// Names of the prior hyperparameter vector α.
  virtual const std::vector<std::string>& alpha_names() const = 0;
  virtual std::vector<double> default_alpha() const = 0;

  /// KL(q‖p) up to an additive constant, as a function of (ξ, α).
  virtual double kl(std::span<const double> xi, std::span<const double> alpha) const = 0;
  virtual HyperDual kl(std::span<const HyperDual> xi, std::span<const HyperDual> alpha) const = 0;

  /// ℓ(α, m) = E_q[log p(θ | α)], the only α-dependent part of the KL.
  virtual double expected_log_prior(std::span<const double> xi, std::span<const double> alpha) const = 0;
  virtual HyperDual expected_log_prior(std::span<const HyperDual> xi, std::span<const HyperDual> alpha) const = 0;

  /// Unnormalized log posterior in unconstrained θ, Jacobians included.
  virtual double log_joint(std::span<const double> theta, std::span<const double> alpha) const = 0;

  virtual std::vector<double> initial_xi() const = 0;

  /// Constrained view of θ for reporting MCMC draws. Identity by default.
  virtual std::vector<std::string> constrained_names() const { return layout().theta_names(); }
  virtual std::vector<double> to_constrained(std::span<const double> theta) const {
    return {theta.begin(), theta.end()};
  }

  std::size_t alpha_index(std::string_view name) const;
  void check_alpha(std::span<const double> alpha) const;
  /// Throws ParameterError unless α has one entry per name.
  void check_alpha_size(std::size_t size) const;
};

/// CRTP helper: Derived provides
///   template <class T> T kl_t(std::span<const T>, std::span<const T>) const;
///   template <class T> T expected_log_prior_t(std::span<const T>, std::span<const T>) const;
template <class Derived>
class ModelBase : public VariationalModel {
 public:
  double kl(std::span<const double> xi, std::span<const double> alpha) const final {
    check_alpha_size(alpha.size());
    return self().template kl_t<double>(xi, alpha);
  }
  HyperDual kl(std::span<const HyperDual> xi, std::span<const HyperDual> alpha) const final {
    check_alpha_size(alpha.size());
    return self().template kl_t<HyperDual>(xi, alpha);
  }
  double expected_log_prior(std::span<const double> xi, std::span<const double> alpha) const final {
    check_alpha_size(alpha.size());
    return self().template expected_log_prior_t<double>(xi, alpha);
  }
  HyperDual expected_log_prior(std::span<const HyperDual> xi, std::span<const HyperDual> alpha) const final {
    check_alpha_size(alpha.size());
    return self().template expected_log_prior_t<HyperDual>(xi, alpha);
  }

 private:
  const Derived& self() const { return static_cast<const Derived&>(*this); }
};

/// Lifts a double vector into constant HyperDuals.
inline std::vector<HyperDual> lift(std::span<const double> x) { return {x.begin(), x.end()}; }

}  // namespace lrvb
