#include "lrvb/optimize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "lrvb/errors.hpp"

namespace lrvb {
namespace {

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

double safe_value(const Objective& obj, std::span<const double> x) {
  try {
    const double f = obj.value(x);
    return std::isfinite(f) ? f : std::numeric_limits<double>::quiet_NaN();
  } catch (const DomainError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

struct Eigensystem {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  Eigen::VectorXd g_tilde;  // Qᵀg
};

Eigen::VectorXd shifted_step(const Eigensystem& es, double shift) {
  Eigen::VectorXd coef(es.values.size());
  for (Eigen::Index i = 0; i < es.values.size(); ++i) coef[i] = -es.g_tilde[i] / (es.values[i] + shift);
  return es.vectors * coef;
}

// Approximate solution of min gᵀp + ½pᵀHp subject to ‖p‖ ≤ radius.
Eigen::VectorXd trust_region_step(const Eigensystem& es, double radius, const std::optional<Eigen::VectorXd>& newton) {
  if (newton && newton->norm() <= radius) return *newton;
  const double lam_min = es.values[0];
  const double lam_max = es.values[es.values.size() - 1];
  const double g_norm = es.g_tilde.norm();
  const double lo = std::max(0.0, -lam_min);
  const double tiny = 1e-12 * std::max({1.0, std::abs(lam_min), std::abs(lam_max)});

  // Hard case: even the smallest admissible shift stays inside the region.
  if (lo > 0.0) {
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(es.values.size());
    for (Eigen::Index i = 0; i < es.values.size(); ++i) {
      const double denom = es.values[i] + lo;
      if (denom > tiny) coef[i] = -es.g_tilde[i] / denom;
    }
    const double inner = coef.norm();
    if (inner < radius && std::abs(es.g_tilde[0]) <= tiny * std::max(1.0, g_norm)) {
      coef[0] = std::sqrt(radius * radius - inner * inner);
      return es.vectors * coef;
    }
  }

  double a = lo;
  double b = lo + g_norm / radius + tiny;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (a + b);
    if (mid <= a || mid >= b) break;
    const Eigen::VectorXd p = shifted_step(es, mid);
    if (!p.allFinite() || p.norm() > radius)
      a = mid;
    else
      b = mid;
  }
  return shifted_step(es, b);
}

}  // namespace

Objective kl_objective(const VariationalModel& model, std::span<const double> alpha) {
  model.check_alpha(alpha);
  std::vector<double> a(alpha.begin(), alpha.end());
  std::vector<HyperDual> ad = lift(a);
  return {[&model, a](std::span<const double> xi) { return model.kl(xi, a); },
          [&model, ad](std::span<const HyperDual> xi) { return model.kl(xi, ad); }};
}

FitResult minimize(const Objective& objective, std::vector<double> x, const OptimizerOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const auto n = static_cast<Eigen::Index>(x.size());
  FitResult result;

  double f = safe_value(objective, x);
  if (!std::isfinite(f)) throw OptimizationError("objective is not finite at the initial point");
  result.kl_trace.push_back(f);

  double radius = options.initial_radius;
  double last_step = std::numeric_limits<double>::infinity();
  Eigen::VectorXd g;
  bool done = false;

  for (int iter = 1; iter <= options.max_iterations && !done; ++iter) {
    result.iterations = iter;
    ValueGradHessian vgh;
    try {
      vgh = value_gradient_hessian(objective.dual, x);
    } catch (const DomainError& e) {
      throw OptimizationError(std::string("derivative evaluation failed: ") + e.what());
    }
    g = vgh.gradient;
    const Eigen::MatrixXd& h = vgh.hessian;
    if (!g.allFinite() || !h.allFinite()) throw OptimizationError("non-finite gradient or Hessian");
    const double g_inf = inf_norm(g);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
    Eigensystem es{eig.eigenvalues(), eig.eigenvectors(), eig.eigenvectors().transpose() * g};
    const bool positive_definite = n == 0 || es.values[0] > 0.0;
    std::optional<Eigen::VectorXd> newton;
    if (positive_definite) newton = shifted_step(es, 0.0);

    if (g_inf <= options.grad_tol && newton && inf_norm(*newton) <= options.step_tol) {
      result.converged = true;
      last_step = inf_norm(*newton);
      // Take the remaining Newton step when it does not worsen the gradient.
      std::vector<double> trial(x);
      for (Eigen::Index i = 0; i < n; ++i) trial[static_cast<std::size_t>(i)] += (*newton)[i];
      const Eigen::VectorXd g_new = gradient(objective.dual, std::span<const double>(trial));
      if (g_new.allFinite() && inf_norm(g_new) <= g_inf) {
        const double f_new = safe_value(objective, trial);
        if (std::isfinite(f_new)) {
          x = std::move(trial);
          f = f_new;
          g = g_new;
          ++result.polish_steps;
        }
      }
      break;
    }
    if (iter == 1 && newton) radius = std::max(radius, newton->norm());

    // Inner loop: shrink the region until a step is accepted.
    int non_finite = 0;
    int rejected = 0;
    while (true) {
      const Eigen::VectorXd p = trust_region_step(es, radius, newton);
      const double p_norm = p.norm();
      const double pred = -(g.dot(p) + 0.5 * p.dot(h * p));
      std::vector<double> trial(x);
      for (Eigen::Index i = 0; i < n; ++i) trial[static_cast<std::size_t>(i)] += p[i];
      const double f_new = safe_value(objective, trial);
      const double noise = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f));

      bool accepted = false;
      bool polish = false;
      double ratio = 0.0;
      if (std::isfinite(f_new)) {
        const double actual = f - f_new;
        ratio = pred > 0.0 ? actual / pred : 0.0;
        if (actual > 0.0 && ratio >= 1e-4) {
          accepted = true;
        } else if (newton && pred <= noise && f_new <= f + noise && (p - *newton).norm() == 0.0) {
          // The decrease is below what the objective can resolve; accept the
          // Newton step if it reduces the gradient.
          const Eigen::VectorXd g_new = gradient(objective.dual, std::span<const double>(trial));
          if (g_new.allFinite() && inf_norm(g_new) < g_inf) accepted = polish = true;
        }
      } else {
        ++non_finite;
      }

      if (accepted) {
        x = std::move(trial);
        last_step = inf_norm(p);
        if (polish) {
          ++result.polish_steps;
          f = f_new;
        } else {
          f = f_new;
          result.kl_trace.push_back(f);
          if (ratio > 0.75 && p_norm >= 0.99 * radius)
            radius = std::min(2.0 * radius, options.max_radius);
          else if (ratio < 0.25)
            radius = 0.25 * p_norm;
        }
        break;
      }

      ++rejected;
      radius = 0.25 * p_norm;
      if (inf_norm(p) <= options.step_tol || rejected > 200) {
        if (non_finite == rejected)
          throw OptimizationError("objective stayed non-finite under every trial step");
        last_step = inf_norm(p);
        if (g_inf <= options.grad_tol && positive_definite) {
          result.converged = true;
        } else {
          result.message = "trust region collapsed before the gradient tolerance was met";
        }
        done = true;
        break;
      }
    }
  }

  if (!result.converged) {
    // Final gradient at the returned point.
    g = gradient(objective.dual, std::span<const double>(x));
    if (result.message.empty()) result.message = "iteration limit reached";
  }
  result.xi_star = std::move(x);
  result.kl_value = f;
  result.grad_norm = inf_norm(g);
  result.final_step = last_step;
  if (result.converged) result.message = "converged";
  result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

FitResult fit(const VariationalModel& model, std::span<const double> alpha, std::optional<std::vector<double>> init,
              const OptimizerOptions& options) {
  std::vector<double> x0 = init ? std::move(*init) : model.initial_xi();
  if (x0.size() != model.layout().xi_dim()) throw ParameterError("initial state has the wrong dimension");
  return minimize(kl_objective(model, alpha), std::move(x0), options);
}

}  // namespace lrvb
