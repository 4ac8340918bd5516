#pragma once

// Hierarchical random-effects model for multi-site treatment effects:
//
//   y_nk | μ_k, τ_k, T_nk, σ_k  ~ N(μ_k + T_nk τ_k, σ_k²)
//   (μ_k, τ_k)                  ~ N((μ, τ), C),   C = diag(s) R(ρ) diag(s)
//   (μ, τ)                      ~ N((μ0, τ0), Λ⁻¹)
//   ρ ~ LKJ(η),  s_j⁻¹ ~ Gamma(a_s, b_s),  σ_k⁻² ~ Gamma(a_σ, b_σ)
//
// Unconstrained θ: μ, τ, (μ_k, τ_k), ζ_k = log σ_k⁻², log s₁, log s₂, z = atanh ρ.
// Gamma priors use the shape–rate convention.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lrvb/dataset.hpp"
#include "lrvb/model.hpp"
#include "lrvb/quadrature.hpp"

namespace lrvb {

struct PriorParams {
  double mu0 = 0.0;
  double tau0 = 0.0;
  // Precision Λ of the (μ, τ) prior, lower triangle.
  double lambda_11 = 0.03;
  double lambda_12 = 0.0;
  double lambda_22 = 0.02;
  double lkj_eta = 15.01;
  double scale_shape = 20.01;
  double scale_rate = 20.01;
  double sigma_shape = 2.01;
  double sigma_rate = 2.01;

  static const std::vector<std::string>& names();
  std::vector<double> to_alpha() const;
  static PriorParams from_alpha(std::span<const double> alpha);
  /// Throws ParameterError unless Λ is SPD and every shape/rate/η is positive.
  void validate() const;
};

struct ModelParameters {
  double mu = 0.0;
  double tau = 0.0;
  std::vector<double> mu_k;
  std::vector<double> tau_k;
  std::vector<double> log_sigma2_inv;
  double log_s1 = 0.0;
  double log_s2 = 0.0;
  double z_rho = 0.0;

  std::size_t num_sites() const noexcept { return mu_k.size(); }
  /// θ in model order: μ, τ, μ_1, τ_1, ..., ζ_1..ζ_K, log s₁, log s₂, z.
  std::vector<double> to_theta() const;
  static ModelParameters from_theta(std::span<const double> theta, std::size_t sites);
};

struct SimulationOptions {
  std::vector<std::size_t> sizes;  // N_k per site
  std::uint64_t seed = 42;
  /// Draw (μ_k, τ_k) from the hierarchy; otherwise use truth.mu_k / truth.tau_k.
  bool draw_site_effects = true;
};

/// Generates outcomes from the model. The first ⌊N_k/2⌋ rows of each site are
/// treated. Returns the dataset and the truth actually used (with drawn site effects).
std::pair<MicrocreditDataset, ModelParameters> simulate(const ModelParameters& truth,
                                                        const SimulationOptions& options);

/// Truth used for bundled fixtures when none is supplied.
ModelParameters default_truth(std::size_t sites);

struct MicrocreditOptions {
  std::size_t quadrature_nodes = 21;
  ScaleCoordinates scale = ScaleCoordinates::kLog;
};

class MicrocreditModel final : public ModelBase<MicrocreditModel> {
 public:
  explicit MicrocreditModel(MicrocreditDataset data, MicrocreditOptions options = {});

  std::string_view name() const override { return "microcredit"; }
  const CoordinateLayout& layout() const override { return layout_; }
  const std::vector<std::string>& alpha_names() const override { return PriorParams::names(); }
  std::vector<double> default_alpha() const override { return PriorParams{}.to_alpha(); }
  double log_joint(std::span<const double> theta, std::span<const double> alpha) const override;
  std::vector<double> initial_xi() const override;
  std::vector<std::string> constrained_names() const override;
  std::vector<double> to_constrained(std::span<const double> theta) const override;

  const MicrocreditDataset& data() const noexcept { return data_; }
  std::size_t num_sites() const noexcept { return sites_; }
  const MicrocreditOptions& options() const noexcept { return options_; }

  // Slot indices into layout().slots().
  std::size_t global_slot() const noexcept { return 0; }
  std::size_t site_slot(std::size_t k) const noexcept { return 1 + k; }
  std::size_t zeta_slot(std::size_t k) const noexcept { return 1 + sites_ + k; }
  std::size_t log_s1_slot() const noexcept { return 1 + 2 * sites_; }
  std::size_t log_s2_slot() const noexcept { return 2 + 2 * sites_; }
  std::size_t z_rho_slot() const noexcept { return 3 + 2 * sites_; }

  template <class T>
  T kl_t(std::span<const T> xi, std::span<const T> alpha) const;
  template <class T>
  T expected_log_prior_t(std::span<const T> xi, std::span<const T> alpha) const;

  // Individual expected terms, exposed for testing.
  template <class T>
  T expected_log_likelihood(std::span<const T> xi) const;
  template <class T>
  T expected_log_hierarchy(std::span<const T> xi) const;
  /// E_q log N((μ, τ); (μ0, τ0), Λ⁻¹).
  template <class T>
  T expected_gaussian_prior(std::span<const T> xi, std::span<const T> alpha) const;
  /// E_q log Gamma(σ_k⁻²; a, b), summed over sites.
  template <class T>
  T expected_sigma_prior(std::span<const T> xi, std::span<const T> alpha) const;
  /// E_q log Gamma(s_j⁻¹; a, b), summed over both scales.
  template <class T>
  T expected_scale_prior(std::span<const T> xi, std::span<const T> alpha) const;
  /// (η − 1) E_q log(1 − ρ²), the ρ-dependent part of the LKJ log density.
  template <class T>
  T expected_lkj_kernel(std::span<const T> xi, std::span<const T> alpha) const;
  /// E_q of the log-Jacobian of θ ↦ (σ_k⁻², s_j⁻¹, ρ).
  template <class T>
  T expected_log_jacobian(std::span<const T> xi) const;

  /// log of the LKJ normalizing constant for 2×2 correlation matrices.
  template <class T>
  static T lkj_log_normalizer(const T& eta);

 private:
  template <class T>
  T expected_log1m_rho_sq(std::span<const T> xi) const;

  MicrocreditDataset data_;
  MicrocreditOptions options_;
  std::size_t sites_;
  CoordinateLayout layout_;
  const GaussHermiteRule* rule_;
};

}  // namespace lrvb
