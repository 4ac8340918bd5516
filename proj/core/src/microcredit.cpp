#include "lrvb/microcredit.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "lrvb/errors.hpp"
#include "lrvb/rng.hpp"

namespace lrvb {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

enum AlphaIndex : std::size_t {
  kLambda11 = 0,
  kLambda12,
  kLambda22,
  kMu0,
  kTau0,
  kLkjEta,
  kScaleShape,
  kScaleRate,
  kSigmaShape,
  kSigmaRate,
  kAlphaCount
};

template <class T>
struct Normal1D {
  T mean;
  T var;
};

template <class T>
Normal1D<T> normal_of(const GaussianFactor1D<T>& f) {
  return {f.mean, f.variance()};
}

// log Gamma(x; shape, rate) for x = exp(sign * u), expected under u ~ N(m, v).
template <class T>
T expected_log_gamma_of_exp(const Normal1D<T>& u, double sign, const T& shape, const T& rate) {
  return shape * log(rate) - lgamma(shape) + (shape - 1.0) * (sign * u.mean) - rate * exp(sign * u.mean + 0.5 * u.var);
}

}  // namespace

// ---------------------------------------------------------------------------
// PriorParams

const std::vector<std::string>& PriorParams::names() {
  static const std::vector<std::string> kNames = {"lambda_11", "lambda_12",   "lambda_22",  "mu0",
                                                  "tau0",      "lkj_eta",     "scale_shape", "scale_rate",
                                                  "sigma_shape", "sigma_rate"};
  return kNames;
}

std::vector<double> PriorParams::to_alpha() const {
  return {lambda_11, lambda_12, lambda_22, mu0, tau0, lkj_eta, scale_shape, scale_rate, sigma_shape, sigma_rate};
}

PriorParams PriorParams::from_alpha(std::span<const double> a) {
  if (a.size() != kAlphaCount) throw ParameterError("prior vector must have 10 entries");
  PriorParams p;
  p.lambda_11 = a[kLambda11];
  p.lambda_12 = a[kLambda12];
  p.lambda_22 = a[kLambda22];
  p.mu0 = a[kMu0];
  p.tau0 = a[kTau0];
  p.lkj_eta = a[kLkjEta];
  p.scale_shape = a[kScaleShape];
  p.scale_rate = a[kScaleRate];
  p.sigma_shape = a[kSigmaShape];
  p.sigma_rate = a[kSigmaRate];
  return p;
}

void PriorParams::validate() const {
  for (double v : to_alpha())
    if (!std::isfinite(v)) throw ParameterError("prior parameters must be finite");
  if (!(lambda_11 > 0.0) || !(lambda_22 > 0.0) || !(lambda_11 * lambda_22 - lambda_12 * lambda_12 > 0.0))
    throw ParameterError("lambda must be symmetric positive definite");
  if (!(lkj_eta > 0.0)) throw ParameterError("lkj_eta must be positive");
  if (!(scale_shape > 0.0) || !(scale_rate > 0.0)) throw ParameterError("scale gamma prior must be positive");
  if (!(sigma_shape > 0.0) || !(sigma_rate > 0.0)) throw ParameterError("sigma gamma prior must be positive");
}

// ---------------------------------------------------------------------------
// ModelParameters

std::vector<double> ModelParameters::to_theta() const {
  const std::size_t k = num_sites();
  if (tau_k.size() != k || log_sigma2_inv.size() != k)
    throw ParameterError("model parameters: per-site vectors differ in length");
  std::vector<double> theta;
  theta.reserve(3 * k + 5);
  theta.push_back(mu);
  theta.push_back(tau);
  for (std::size_t i = 0; i < k; ++i) {
    theta.push_back(mu_k[i]);
    theta.push_back(tau_k[i]);
  }
  theta.insert(theta.end(), log_sigma2_inv.begin(), log_sigma2_inv.end());
  theta.push_back(log_s1);
  theta.push_back(log_s2);
  theta.push_back(z_rho);
  return theta;
}

ModelParameters ModelParameters::from_theta(std::span<const double> theta, std::size_t sites) {
  if (theta.size() != 3 * sites + 5) throw ParameterError("theta has the wrong length for the site count");
  ModelParameters p;
  p.mu = theta[0];
  p.tau = theta[1];
  for (std::size_t i = 0; i < sites; ++i) {
    p.mu_k.push_back(theta[2 + 2 * i]);
    p.tau_k.push_back(theta[3 + 2 * i]);
  }
  for (std::size_t i = 0; i < sites; ++i) p.log_sigma2_inv.push_back(theta[2 + 2 * sites + i]);
  p.log_s1 = theta[2 + 3 * sites];
  p.log_s2 = theta[3 + 3 * sites];
  p.z_rho = theta[4 + 3 * sites];
  return p;
}

ModelParameters default_truth(std::size_t sites) {
  ModelParameters t;
  t.mu = 1.0;
  t.tau = 0.5;
  t.log_s1 = std::log(0.8);
  t.log_s2 = std::log(0.6);
  t.z_rho = std::atanh(0.3);
  t.mu_k.assign(sites, 0.0);
  t.tau_k.assign(sites, 0.0);
  t.log_sigma2_inv.assign(sites, 0.0);
  // Site noise sd between 0.8 and 1.25.
  for (std::size_t k = 0; k < sites; ++k) {
    const double frac = sites > 1 ? static_cast<double>(k) / static_cast<double>(sites - 1) : 0.5;
    const double sigma = 0.8 + 0.45 * frac;
    t.log_sigma2_inv[k] = -2.0 * std::log(sigma);
  }
  return t;
}

std::pair<MicrocreditDataset, ModelParameters> simulate(const ModelParameters& truth,
                                                        const SimulationOptions& options) {
  const std::size_t k = options.sizes.size();
  if (k == 0) throw ParameterError("simulate: need at least one site");
  for (std::size_t n : options.sizes)
    if (n == 0) throw ParameterError("simulate: site sizes must be positive");

  ModelParameters used = truth;
  if (used.log_sigma2_inv.size() == 1) used.log_sigma2_inv.assign(k, used.log_sigma2_inv[0]);
  if (used.log_sigma2_inv.size() != k) throw ParameterError("simulate: need one noise level per site");

  std::mt19937_64 engine = make_engine(options.seed, Stream::kSimulate);
  std::normal_distribution<double> normal(0.0, 1.0);

  if (options.draw_site_effects) {
    const double s1 = std::exp(used.log_s1);
    const double s2 = std::exp(used.log_s2);
    const double rho = std::tanh(used.z_rho);
    used.mu_k.assign(k, 0.0);
    used.tau_k.assign(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      const double e1 = normal(engine);
      const double e2 = normal(engine);
      used.mu_k[i] = used.mu + s1 * e1;
      used.tau_k[i] = used.tau + s2 * (rho * e1 + std::sqrt(1.0 - rho * rho) * e2);
    }
  } else if (used.mu_k.size() != k || used.tau_k.size() != k) {
    throw ParameterError("simulate: fixed site effects must have one entry per site");
  }

  std::vector<Observation> rows;
  for (std::size_t i = 0; i < k; ++i) {
    const double sigma = std::exp(-0.5 * used.log_sigma2_inv[i]);
    const std::size_t n = options.sizes[i];
    for (std::size_t r = 0; r < n; ++r) {
      const int treated = r < n / 2 ? 1 : 0;
      const double mean = used.mu_k[i] + treated * used.tau_k[i];
      rows.push_back({static_cast<int>(i + 1), treated, mean + sigma * normal(engine)});
    }
  }
  return {MicrocreditDataset(std::move(rows)), used};
}

// ---------------------------------------------------------------------------
// MicrocreditModel

MicrocreditModel::MicrocreditModel(MicrocreditDataset data, MicrocreditOptions options)
    : data_(std::move(data)),
      options_(options),
      sites_(data_.num_sites()),
      layout_(options.scale),
      rule_(&gauss_hermite_rule(options.quadrature_nodes)) {
  if (sites_ == 0) throw ValidationError("dataset has no sites");
  layout_.add_2d("mu_tau", "mu", "tau");
  for (std::size_t k = 0; k < sites_; ++k) {
    const std::string s = std::to_string(k + 1);
    layout_.add_2d("site_" + s, "mu_" + s, "tau_" + s);
  }
  for (std::size_t k = 0; k < sites_; ++k) layout_.add_1d("zeta_" + std::to_string(k + 1));
  layout_.add_1d("log_s1");
  layout_.add_1d("log_s2");
  layout_.add_1d("z_rho");
  layout_.validate();
}

template <class T>
T MicrocreditModel::expected_log1m_rho_sq(std::span<const T> xi) const {
  const GaussianFactor1D<T> z = layout_.factor_1d(xi, z_rho_slot());
  return rule_->expectation([](const T& x) { return log1m_tanh_sq(x); }, z.mean, z.sd());
}

template <class T>
T MicrocreditModel::expected_log_likelihood(std::span<const T> xi) const {
  T acc = 0.0;
  const auto& sums = data_.summaries();
  for (std::size_t k = 0; k < sites_; ++k) {
    const Moments2D<T> site = moments(layout_.factor_2d(xi, site_slot(k)));
    const Normal1D<T> zeta = normal_of(layout_.factor_1d(xi, zeta_slot(k)));
    const T precision = exp(zeta.mean + 0.5 * zeta.var);
    for (int t = 0; t < 2; ++t) {
      const ArmSummary& arm = t ? sums[k].treated : sums[k].control;
      if (arm.count == 0) continue;
      const double n = static_cast<double>(arm.count);
      const T mean = t ? site.mean[0] + site.mean[1] : site.mean[0];
      const T var = t ? site.cov11 + 2.0 * site.cov12 + site.cov22 : site.cov11;
      const T sq = arm.sum_sq_dev + n * (square(arm.mean - mean) + var);
      acc += n * (-0.5 * kLog2Pi + 0.5 * zeta.mean) - 0.5 * precision * sq;
    }
  }
  return acc;
}

template <class T>
T MicrocreditModel::expected_log_hierarchy(std::span<const T> xi) const {
  const Moments2D<T> g = moments(layout_.factor_2d(xi, global_slot()));
  const Normal1D<T> u1 = normal_of(layout_.factor_1d(xi, log_s1_slot()));
  const Normal1D<T> u2 = normal_of(layout_.factor_1d(xi, log_s2_slot()));
  const Normal1D<T> z = normal_of(layout_.factor_1d(xi, z_rho_slot()));

  // Moments of the scale and correlation terms of C⁻¹ = diag(s)⁻¹ R⁻¹ diag(s)⁻¹,
  // with 1/(1-ρ²) = cosh² z and ρ/(1-ρ²) = sinh z cosh z.
  const T inv_s1_sq = exp(-2.0 * u1.mean + 2.0 * u1.var);
  const T inv_s2_sq = exp(-2.0 * u2.mean + 2.0 * u2.var);
  const T inv_s1_s2 = exp(-u1.mean - u2.mean + 0.5 * (u1.var + u2.var));
  const T e2z = exp(2.0 * z.var);
  const T cosh_sq = 0.5 * (1.0 + cosh(2.0 * z.mean) * e2z);
  const T sinh_cosh = 0.5 * sinh(2.0 * z.mean) * e2z;
  const T log_det_c = 2.0 * (u1.mean + u2.mean) + expected_log1m_rho_sq(xi);

  T quad = 0.0;
  for (std::size_t k = 0; k < sites_; ++k) {
    const Moments2D<T> s = moments(layout_.factor_2d(xi, site_slot(k)));
    const T d1 = s.mean[0] - g.mean[0];
    const T d2 = s.mean[1] - g.mean[1];
    const T e11 = d1 * d1 + s.cov11 + g.cov11;
    const T e12 = d1 * d2 + s.cov12 + g.cov12;
    const T e22 = d2 * d2 + s.cov22 + g.cov22;
    quad += cosh_sq * (e11 * inv_s1_sq + e22 * inv_s2_sq) - 2.0 * sinh_cosh * e12 * inv_s1_s2;
  }
  const double k = static_cast<double>(sites_);
  return -k * kLog2Pi - 0.5 * k * log_det_c - 0.5 * quad;
}

template <class T>
T MicrocreditModel::expected_gaussian_prior(std::span<const T> xi, std::span<const T> a) const {
  const Moments2D<T> g = moments(layout_.factor_2d(xi, global_slot()));
  const T& l11 = a[kLambda11];
  const T& l12 = a[kLambda12];
  const T& l22 = a[kLambda22];
  const T d1 = g.mean[0] - a[kMu0];
  const T d2 = g.mean[1] - a[kTau0];
  const T quad = l11 * d1 * d1 + 2.0 * l12 * d1 * d2 + l22 * d2 * d2;
  const T trace = l11 * g.cov11 + 2.0 * l12 * g.cov12 + l22 * g.cov22;
  return -kLog2Pi + 0.5 * log(l11 * l22 - l12 * l12) - 0.5 * (quad + trace);
}

template <class T>
T MicrocreditModel::expected_sigma_prior(std::span<const T> xi, std::span<const T> a) const {
  T acc = 0.0;
  for (std::size_t k = 0; k < sites_; ++k)
    acc += expected_log_gamma_of_exp(normal_of(layout_.factor_1d(xi, zeta_slot(k))), 1.0, a[kSigmaShape],
                                     a[kSigmaRate]);
  return acc;
}

template <class T>
T MicrocreditModel::expected_scale_prior(std::span<const T> xi, std::span<const T> a) const {
  return expected_log_gamma_of_exp(normal_of(layout_.factor_1d(xi, log_s1_slot())), -1.0, a[kScaleShape],
                                   a[kScaleRate]) +
         expected_log_gamma_of_exp(normal_of(layout_.factor_1d(xi, log_s2_slot())), -1.0, a[kScaleShape],
                                   a[kScaleRate]);
}

template <class T>
T MicrocreditModel::expected_lkj_kernel(std::span<const T> xi, std::span<const T> a) const {
  return (a[kLkjEta] - 1.0) * expected_log1m_rho_sq(xi);
}

template <class T>
T MicrocreditModel::lkj_log_normalizer(const T& eta) {
  // ∫_{-1}^{1} (1-ρ²)^{η-1} dρ = 2^{2η-1} B(η, η)
  return lgamma(2.0 * eta) - 2.0 * lgamma(eta) - (2.0 * eta - 1.0) * std::numbers::ln2;
}

template <class T>
T MicrocreditModel::expected_log_jacobian(std::span<const T> xi) const {
  // d(σ⁻²)/dζ = e^ζ, |d(s⁻¹)/du| = e^{-u}, dρ/dz = 1 - tanh² z.
  T acc = 0.0;
  for (std::size_t k = 0; k < sites_; ++k) acc += layout_.factor_1d(xi, zeta_slot(k)).mean;
  acc -= layout_.factor_1d(xi, log_s1_slot()).mean;
  acc -= layout_.factor_1d(xi, log_s2_slot()).mean;
  return acc + expected_log1m_rho_sq(xi);
}

template <class T>
T MicrocreditModel::expected_log_prior_t(std::span<const T> xi, std::span<const T> alpha) const {
  return expected_gaussian_prior(xi, alpha) + expected_sigma_prior(xi, alpha) + expected_scale_prior(xi, alpha) +
         expected_lkj_kernel(xi, alpha) + lkj_log_normalizer(alpha[kLkjEta]);
}

template <class T>
T MicrocreditModel::kl_t(std::span<const T> xi, std::span<const T> alpha) const {
  const T log_lik = expected_log_likelihood(xi);
  const T log_hier = expected_log_hierarchy(xi);
  const T log_prior = expected_log_prior_t(xi, alpha);
  const T log_jac = expected_log_jacobian(xi);
  return -(log_lik + log_hier + log_prior + log_jac) - layout_.total_entropy(xi);
}

double MicrocreditModel::log_joint(std::span<const double> theta, std::span<const double> alpha) const {
  check_alpha(alpha);
  const ModelParameters p = ModelParameters::from_theta(theta, sites_);
  const PriorParams a = PriorParams::from_alpha(alpha);

  double lp = 0.0;
  for (const Observation& r : data_.rows()) {
    const std::size_t k = static_cast<std::size_t>(r.site - 1);
    const double zeta = p.log_sigma2_inv[k];
    const double resid = r.outcome - p.mu_k[k] - r.treatment * p.tau_k[k];
    lp += -0.5 * kLog2Pi + 0.5 * zeta - 0.5 * std::exp(zeta) * resid * resid;
  }

  // (μ_k, τ_k) ~ N((μ, τ), C)
  const double s1 = std::exp(p.log_s1);
  const double s2 = std::exp(p.log_s2);
  const double rho = std::tanh(p.z_rho);
  const double log1m_rho2 = log1m_tanh_sq(p.z_rho);
  const double inv1m_rho2 = std::exp(-log1m_rho2);
  for (std::size_t k = 0; k < sites_; ++k) {
    const double d1 = (p.mu_k[k] - p.mu) / s1;
    const double d2 = (p.tau_k[k] - p.tau) / s2;
    lp += -kLog2Pi - p.log_s1 - p.log_s2 - 0.5 * log1m_rho2 -
          0.5 * inv1m_rho2 * (d1 * d1 - 2.0 * rho * d1 * d2 + d2 * d2);
  }

  // (μ, τ) ~ N((μ0, τ0), Λ⁻¹)
  const double g1 = p.mu - a.mu0;
  const double g2 = p.tau - a.tau0;
  const double det = a.lambda_11 * a.lambda_22 - a.lambda_12 * a.lambda_12;
  lp += -kLog2Pi + 0.5 * std::log(det) -
        0.5 * (a.lambda_11 * g1 * g1 + 2.0 * a.lambda_12 * g1 * g2 + a.lambda_22 * g2 * g2);

  auto log_gamma_density = [](double x, double shape, double rate) {
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
  };
  for (std::size_t k = 0; k < sites_; ++k) {
    const double zeta = p.log_sigma2_inv[k];
    lp += log_gamma_density(std::exp(zeta), a.sigma_shape, a.sigma_rate) + zeta;
  }
  lp += log_gamma_density(1.0 / s1, a.scale_shape, a.scale_rate) - p.log_s1;
  lp += log_gamma_density(1.0 / s2, a.scale_shape, a.scale_rate) - p.log_s2;
  lp += lkj_log_normalizer(a.lkj_eta) + (a.lkj_eta - 1.0) * log1m_rho2 + log1m_rho2;
  return lp;
}

std::vector<double> MicrocreditModel::initial_xi() const {
  const auto& sums = data_.summaries();
  double diff_total = 0.0;
  std::size_t diff_sites = 0;
  for (const SiteSummary& s : sums) {
    if (s.control.count && s.treated.count) {
      diff_total += s.treated.mean - s.control.mean;
      ++diff_sites;
    }
  }
  const double pooled_diff = diff_sites ? diff_total / static_cast<double>(diff_sites) : 0.0;

  std::vector<double> mu_k(sites_), tau_k(sites_), zeta(sites_);
  for (std::size_t k = 0; k < sites_; ++k) {
    const SiteSummary& s = sums[k];
    if (s.control.count && s.treated.count) {
      mu_k[k] = s.control.mean;
      tau_k[k] = s.treated.mean - s.control.mean;
    } else if (s.control.count) {
      mu_k[k] = s.control.mean;
      tau_k[k] = pooled_diff;
    } else {
      mu_k[k] = s.treated.mean - pooled_diff;
      tau_k[k] = pooled_diff;
    }
    const std::size_t arms = (s.control.count ? 1 : 0) + (s.treated.count ? 1 : 0);
    const std::size_t n = s.control.count + s.treated.count;
    double var = n > arms ? (s.control.sum_sq_dev + s.treated.sum_sq_dev) / static_cast<double>(n - arms) : 1.0;
    if (!(var > 1e-12)) var = 1.0;
    zeta[k] = -std::log(var);
  }
  double mu = 0.0;
  double tau = 0.0;
  for (std::size_t k = 0; k < sites_; ++k) {
    mu += mu_k[k];
    tau += tau_k[k];
  }
  mu /= static_cast<double>(sites_);
  tau /= static_cast<double>(sites_);

  constexpr double kLogSd = -1.0;
  std::vector<double> xi(layout_.xi_dim());
  layout_.set_factor(xi, global_slot(), GaussianFactor2D<double>{{mu, tau}, kLogSd, 0.0, kLogSd});
  for (std::size_t k = 0; k < sites_; ++k) {
    layout_.set_factor(xi, site_slot(k), GaussianFactor2D<double>{{mu_k[k], tau_k[k]}, kLogSd, 0.0, kLogSd});
    layout_.set_factor(xi, zeta_slot(k), GaussianFactor1D<double>{zeta[k], kLogSd});
  }
  layout_.set_factor(xi, log_s1_slot(), GaussianFactor1D<double>{0.0, kLogSd});
  layout_.set_factor(xi, log_s2_slot(), GaussianFactor1D<double>{0.0, kLogSd});
  layout_.set_factor(xi, z_rho_slot(), GaussianFactor1D<double>{0.0, kLogSd});
  return xi;
}

std::vector<std::string> MicrocreditModel::constrained_names() const {
  std::vector<std::string> names = {"mu", "tau"};
  for (std::size_t k = 0; k < sites_; ++k) {
    names.push_back("mu_" + std::to_string(k + 1));
    names.push_back("tau_" + std::to_string(k + 1));
  }
  for (std::size_t k = 0; k < sites_; ++k) names.push_back("sigma_" + std::to_string(k + 1));
  names.insert(names.end(), {"s1", "s2", "rho"});
  return names;
}

std::vector<double> MicrocreditModel::to_constrained(std::span<const double> theta) const {
  std::vector<double> out(theta.begin(), theta.end());
  for (std::size_t k = 0; k < sites_; ++k) out[2 + 2 * sites_ + k] = std::exp(-0.5 * theta[2 + 2 * sites_ + k]);
  out[2 + 3 * sites_] = std::exp(theta[2 + 3 * sites_]);
  out[3 + 3 * sites_] = std::exp(theta[3 + 3 * sites_]);
  out[4 + 3 * sites_] = std::tanh(theta[4 + 3 * sites_]);
  return out;
}

#define LRVB_INSTANTIATE(T)                                                                               \
  template T MicrocreditModel::kl_t<T>(std::span<const T>, std::span<const T>) const;                   \
  template T MicrocreditModel::expected_log_prior_t<T>(std::span<const T>, std::span<const T>) const;   \
  template T MicrocreditModel::expected_log_likelihood<T>(std::span<const T>) const;                    \
  template T MicrocreditModel::expected_log_hierarchy<T>(std::span<const T>) const;                     \
  template T MicrocreditModel::expected_gaussian_prior<T>(std::span<const T>, std::span<const T>) const; \
  template T MicrocreditModel::expected_sigma_prior<T>(std::span<const T>, std::span<const T>) const;   \
  template T MicrocreditModel::expected_scale_prior<T>(std::span<const T>, std::span<const T>) const;   \
  template T MicrocreditModel::expected_lkj_kernel<T>(std::span<const T>, std::span<const T>) const;    \
  template T MicrocreditModel::expected_log_jacobian<T>(std::span<const T>) const;                      \
  template T MicrocreditModel::lkj_log_normalizer<T>(const T&);

LRVB_INSTANTIATE(double)
LRVB_INSTANTIATE(HyperDual)
LRVB_INSTANTIATE(long double)
LRVB_INSTANTIATE(HyperDualLD)
#undef LRVB_INSTANTIATE

}  // namespace lrvb
