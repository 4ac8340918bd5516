#pragma once

// Independent numerical oracles for tests: finite differences from plain
// function values, dense-grid integration, extended-precision refits.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>

#include "lrvb/dualnum.hpp"
#include "lrvb/lrvb.hpp"
#include "lrvb/optimize.hpp"

namespace oracle {

using ScalarFn = std::function<double(std::span<const double>)>;

inline std::string data_path(const std::string& name) { return std::string(LRVB_DATA_DIR) + "/" + name; }

/// Central difference of f along e_i, Richardson-extrapolated over (h, h/2).
inline double fd_partial(const ScalarFn& f, std::vector<double> x, std::size_t i, double h) {
  auto central = [&](double step) {
    const double x0 = x[i];
    x[i] = x0 + step;
    const double fp = f(x);
    x[i] = x0 - step;
    const double fm = f(x);
    x[i] = x0;
    return (fp - fm) / (2.0 * step);
  };
  return (4.0 * central(h / 2.0) - central(h)) / 3.0;
}

inline Eigen::VectorXd fd_gradient(const ScalarFn& f, std::span<const double> x, double h) {
  std::vector<double> xv(x.begin(), x.end());
  Eigen::VectorXd g(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) g[static_cast<Eigen::Index>(i)] = fd_partial(f, xv, i, h);
  return g;
}

/// Four-point mixed second difference, Richardson-extrapolated over (h, h/2).
inline Eigen::MatrixXd fd_hessian(const ScalarFn& f, std::span<const double> x, double h) {
  const std::size_t n = x.size();
  std::vector<double> xv(x.begin(), x.end());
  auto mixed = [&](std::size_t i, std::size_t j, double s) {
    auto at = [&](double di, double dj) {
      std::vector<double> y = xv;
      y[i] += di;
      y[j] += dj;
      return f(y);
    };
    if (i == j) return (at(s, 0.0) - 2.0 * f(xv) + at(-s, 0.0)) / (s * s);
    return (at(s, s) - at(s, -s) - at(-s, s) + at(-s, -s)) / (4.0 * s * s);
  };
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double v = (4.0 * mixed(i, j, h / 2.0) - mixed(i, j, h)) / 3.0;
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  return out;
}

/// max |a - b| / max(max |b|, floor).
inline double rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-12) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), floor);
}

/// Composite trapezoid rule with n intervals on [lo, hi].
inline double trapezoid(const std::function<double(double)>& g, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double acc = 0.5 * (g(lo) + g(hi));
  for (int i = 1; i < n; ++i) acc += g(lo + i * h);
  return acc * h;
}

inline double normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

/// Random SPD matrix with eigenvalues in [0.2, 5] and a random rotation.
inline Eigen::MatrixXd random_spd(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(std::log(0.2), std::log(5.0));
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd ev(d);
  for (int i = 0; i < d; ++i) ev[i] = std::exp(unif(rng));
  Eigen::MatrixXd s = q * ev.asDiagonal() * q.transpose();
  return 0.5 * (s + s.transpose());
}

/// E_q[θ] at the KL optimum for α given in long double. A double-precision
/// fit is refined by Newton steps on the extended-precision gradient, so the
/// result resolves changes far below double rounding of the means.
template <class Model>
std::vector<long double> refit_means_ld(const Model& model, const std::vector<long double>& alpha,
                                        const std::vector<double>& start) {
  using lrvb::HyperDualLD;
  const std::vector<double> alpha_d(alpha.begin(), alpha.end());
  const lrvb::FitResult fr = lrvb::fit(model, alpha_d, start);
  const Eigen::LLT<Eigen::MatrixXd> llt(lrvb::kl_hessian(model, alpha_d, fr.xi_star));
  std::vector<long double> x(fr.xi_star.begin(), fr.xi_star.end());
  const std::vector<HyperDualLD> a(alpha.begin(), alpha.end());
  for (int it = 0; it < 4; ++it) {
    Eigen::VectorXd g(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
      std::vector<HyperDualLD> xd(x.begin(), x.end());
      xd[i].d1 = 1;
      g[static_cast<Eigen::Index>(i)] =
          static_cast<double>(model.template kl_t<HyperDualLD>(std::span<const HyperDualLD>(xd), a).d1);
    }
    const Eigen::VectorXd step = llt.solve(g);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= step[static_cast<Eigen::Index>(i)];
  }
  return model.layout().theta_mean(std::span<const long double>(x));
}

/// Normwise relative discrepancy between central-difference refits at ±h
/// along α_j and the predicted column S[:, j].
template <class Model>
double fd_sensitivity_error(const Model& model, const std::vector<double>& alpha, const std::vector<double>& xi_star,
                            const Eigen::VectorXd& predicted, std::size_t j, double h) {
  std::vector<long double> plus(alpha.begin(), alpha.end());
  std::vector<long double> minus = plus;
  plus[j] += h;
  minus[j] -= h;
  const auto mp = refit_means_ld(model, plus, xi_star);
  const auto mm = refit_means_ld(model, minus, xi_star);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < mp.size(); ++i) {
    const double fd = static_cast<double>((mp[i] - mm[i]) / (2.0L * static_cast<long double>(h)));
    const double s = predicted[static_cast<Eigen::Index>(i)];
    num += (fd - s) * (fd - s);
    den += s * s;
  }
  return std::sqrt(num / den);
}

}  // namespace oracle
