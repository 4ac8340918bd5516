#pragma once

// Hyper-dual numbers: second-order forward-mode differentiation.
//
// A HyperDual carries f, ∂f/∂ε₁, ∂f/∂ε₂ and ∂²f/∂ε₁∂ε₂ for two independent
// infinitesimal directions. Seeding ε₁ along e_i and ε₂ along e_j yields the
// Hessian entry (i, j) exactly in the d12 slot.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "lrvb/errors.hpp"
#include "lrvb/parallel.hpp"

namespace lrvb {

template <class Real>
struct BasicHyperDual {
  Real value = 0;
  Real d1 = 0;
  Real d2 = 0;
  Real d12 = 0;

  constexpr BasicHyperDual() = default;
  // Implicit so constants mix freely into generic objective code.
  constexpr BasicHyperDual(Real v) : value(v) {}  // NOLINT
  constexpr BasicHyperDual(Real v, Real a, Real b, Real ab) : value(v), d1(a), d2(b), d12(ab) {}

  constexpr BasicHyperDual& operator+=(const BasicHyperDual& o) {
    value += o.value;
    d1 += o.d1;
    d2 += o.d2;
    d12 += o.d12;
    return *this;
  }
  constexpr BasicHyperDual& operator-=(const BasicHyperDual& o) {
    value -= o.value;
    d1 -= o.d1;
    d2 -= o.d2;
    d12 -= o.d12;
    return *this;
  }
  constexpr BasicHyperDual& operator*=(const BasicHyperDual& o) {
    *this = BasicHyperDual{value * o.value, d1 * o.value + value * o.d1, d2 * o.value + value * o.d2,
                           d12 * o.value + d1 * o.d2 + d2 * o.d1 + value * o.d12};
    return *this;
  }
  BasicHyperDual& operator/=(const BasicHyperDual& o) { return *this *= reciprocal(o); }

  // Hidden friends, so mixed expressions like 2.0 * x convert the constant.
  friend constexpr BasicHyperDual operator+(BasicHyperDual a, const BasicHyperDual& b) { return a += b; }
  friend constexpr BasicHyperDual operator-(BasicHyperDual a, const BasicHyperDual& b) { return a -= b; }
  friend constexpr BasicHyperDual operator*(BasicHyperDual a, const BasicHyperDual& b) { return a *= b; }
  friend BasicHyperDual operator/(BasicHyperDual a, const BasicHyperDual& b) { return a /= b; }
  friend constexpr BasicHyperDual operator-(const BasicHyperDual& a) { return {-a.value, -a.d1, -a.d2, -a.d12}; }
  friend constexpr BasicHyperDual operator+(const BasicHyperDual& a) { return a; }

  friend constexpr bool operator<(const BasicHyperDual& a, const BasicHyperDual& b) { return a.value < b.value; }
  friend constexpr bool operator>(const BasicHyperDual& a, const BasicHyperDual& b) { return a.value > b.value; }
  friend constexpr bool operator<=(const BasicHyperDual& a, const BasicHyperDual& b) { return a.value <= b.value; }
  friend constexpr bool operator>=(const BasicHyperDual& a, const BasicHyperDual& b) { return a.value >= b.value; }

  // Chain rule for a unary primitive with derivatives f1 = f'(x), f2 = f''(x).
  friend constexpr BasicHyperDual chain(const BasicHyperDual& x, Real f0, Real f1, Real f2) {
    return {f0, f1 * x.d1, f1 * x.d2, f1 * x.d12 + f2 * x.d1 * x.d2};
  }

  friend BasicHyperDual reciprocal(const BasicHyperDual& x) {
    if (x.value == 0) throw DomainError("div");
    const Real r = 1 / x.value;
    return chain(x, r, -r * r, 2 * r * r * r);
  }

  friend BasicHyperDual exp(const BasicHyperDual& x) {
    const Real e = std::exp(x.value);
    return chain(x, e, e, e);
  }

  friend BasicHyperDual log(const BasicHyperDual& x) {
    if (!(x.value > 0)) throw DomainError("log");
    const Real r = 1 / x.value;
    return chain(x, std::log(x.value), r, -r * r);
  }

  friend BasicHyperDual log1p(const BasicHyperDual& x) {
    if (!(x.value > -1)) throw DomainError("log1p");
    const Real r = 1 / (1 + x.value);
    return chain(x, std::log1p(x.value), r, -r * r);
  }

  friend BasicHyperDual sqrt(const BasicHyperDual& x) {
    if (!(x.value > 0)) throw DomainError("sqrt");
    const Real s = std::sqrt(x.value);
    return chain(x, s, Real(0.5) / s, Real(-0.25) / (s * x.value));
  }

  friend BasicHyperDual tanh(const BasicHyperDual& x) {
    const Real t = std::tanh(x.value);
    const Real sech2 = 1 - t * t;
    return chain(x, t, sech2, -2 * t * sech2);
  }

  friend BasicHyperDual sinh(const BasicHyperDual& x) {
    const Real s = std::sinh(x.value);
    return chain(x, s, std::cosh(x.value), s);
  }

  friend BasicHyperDual cosh(const BasicHyperDual& x) {
    const Real c = std::cosh(x.value);
    return chain(x, c, std::sinh(x.value), c);
  }

  friend BasicHyperDual abs(const BasicHyperDual& x) { return x.value < 0 ? -x : x; }

  friend BasicHyperDual pow(const BasicHyperDual& x, Real p) {
    if (x.value < 0 && p != std::floor(p)) throw DomainError("pow");
    if (x.value == 0 && p < 2) throw DomainError("pow");
    const Real f0 = std::pow(x.value, p);
    const Real f1 = p * std::pow(x.value, p - 1);
    const Real f2 = p * (p - 1) * std::pow(x.value, p - 2);
    return chain(x, f0, f1, f2);
  }

  friend BasicHyperDual pow(const BasicHyperDual& x, const BasicHyperDual& p) {
    if (!(x.value > 0)) throw DomainError("pow");
    return exp(p * log(x));
  }

  friend BasicHyperDual lgamma(const BasicHyperDual& x) {
    if (!(x.value > 0)) throw DomainError("lgamma");
    return chain(x, std::lgamma(x.value), boost::math::digamma(x.value), boost::math::trigamma(x.value));
  }

  friend Real value_of(const BasicHyperDual& x) { return x.value; }
};

using HyperDual = BasicHyperDual<double>;
/// Extended-precision variant, used for reference computations.
using HyperDualLD = BasicHyperDual<long double>;

// Plain overloads so generic code can call these unqualified inside this
// namespace without a HyperDual conversion sneaking in.
inline double exp(double x) { return std::exp(x); }
inline double log(double x) { return std::log(x); }
inline double log1p(double x) { return std::log1p(x); }
inline double sqrt(double x) { return std::sqrt(x); }
inline double tanh(double x) { return std::tanh(x); }
inline double sinh(double x) { return std::sinh(x); }
inline double cosh(double x) { return std::cosh(x); }
inline double abs(double x) { return std::fabs(x); }
inline double pow(double x, double p) { return std::pow(x, p); }
inline double lgamma(double x) { return std::lgamma(x); }
inline long double exp(long double x) { return std::exp(x); }
inline long double log(long double x) { return std::log(x); }
inline long double log1p(long double x) { return std::log1p(x); }
inline long double sqrt(long double x) { return std::sqrt(x); }
inline long double tanh(long double x) { return std::tanh(x); }
inline long double sinh(long double x) { return std::sinh(x); }
inline long double cosh(long double x) { return std::cosh(x); }
inline long double abs(long double x) { return std::fabs(x); }
inline long double pow(long double x, long double p) { return std::pow(x, p); }
inline long double lgamma(long double x) { return std::lgamma(x); }

inline double value_of(double x) { return x; }
inline long double value_of(long double x) { return x; }

template <class T>
T square(const T& x) {
  return x * x;
}

/// log(1 - tanh(z)^2) = -2 log cosh z, stable for large |z|.
template <class T>
T log1m_tanh_sq(const T& z) {
  using Real = decltype(value_of(z));
  const T a = abs(z);
  return 2.0 * (std::numbers::ln2_v<Real> - a - log1p(exp(-2.0 * a)));
}

// ---------------------------------------------------------------------------
// Derivative drivers. `f` is any callable taking std::span<const HyperDual>
// and returning HyperDual.

struct ValueGradHessian {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

template <class F>
Eigen::VectorXd gradient(const F& f, std::span<const double> x) {
  const std::size_t n = x.size();
  Eigen::VectorXd g(static_cast<Eigen::Index>(n));
  parallel_for(n, [&](std::size_t i) {
    std::vector<HyperDual> xd(x.begin(), x.end());
    xd[i].d1 = 1.0;
    g[static_cast<Eigen::Index>(i)] = f(std::span<const HyperDual>(xd)).d1;
  });
  return g;
}

/// Value, gradient and exact Hessian from n(n+1)/2 passes. Each off-diagonal
/// entry is evaluated once and mirrored, so the result is bitwise symmetric.
template <class F>
ValueGradHessian value_gradient_hessian(const F& f, std::span<const double> x) {
  const std::size_t n = x.size();
  ValueGradHessian out;
  out.gradient.resize(static_cast<Eigen::Index>(n));
  out.hessian.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const std::size_t pairs = n * (n + 1) / 2;
  std::vector<double> values(n, 0.0);
  parallel_for(pairs, [&](std::size_t p) {
    // Unrank p into (i, j) with i <= j, row-major over the upper triangle.
    std::size_t i = 0;
    std::size_t rem = p;
    while (rem >= n - i) {
      rem -= n - i;
      ++i;
    }
    const std::size_t j = i + rem;
    std::vector<HyperDual> xd(x.begin(), x.end());
    xd[i].d1 = 1.0;
    xd[j].d2 = 1.0;
    const HyperDual r = f(std::span<const HyperDual>(xd));
    const auto ii = static_cast<Eigen::Index>(i);
    const auto jj = static_cast<Eigen::Index>(j);
    out.hessian(ii, jj) = r.d12;
    out.hessian(jj, ii) = r.d12;
    if (i == j) {
      out.gradient[ii] = r.d1;
      values[i] = r.value;
    }
  });
  out.value = n ? values[0] : value_of(f(std::span<const HyperDual>()));
  return out;
}

template <class F>
Eigen::MatrixXd hessian(const F& f, std::span<const double> x) {
  return value_gradient_hessian(f, x).hessian;
}

/// Mixed second derivatives ∂²f/∂x_i∂y_j of f(x, y); one pass per (i, j).
template <class F>
Eigen::MatrixXd mixed_hessian(const F& f, std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  const std::size_t m = y.size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  parallel_for(n * m, [&](std::size_t p) {
    const std::size_t i = p / m;
    const std::size_t j = p % m;
    std::vector<HyperDual> xd(x.begin(), x.end());
    std::vector<HyperDual> yd(y.begin(), y.end());
    xd[i].d1 = 1.0;
    yd[j].d2 = 1.0;
    out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
        f(std::span<const HyperDual>(xd), std::span<const HyperDual>(yd)).d12;
  });
  return out;
}

/// Jacobian of a vector-valued F: span<const HyperDual> -> std::vector<HyperDual>.
template <class F>
Eigen::MatrixXd jacobian(const F& f, std::span<const double> x, std::size_t rows) {
  const std::size_t n = x.size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n));
  parallel_for(n, [&](std::size_t j) {
    std::vector<HyperDual> xd(x.begin(), x.end());
    xd[j].d1 = 1.0;
    const std::vector<HyperDual> r = f(std::span<const HyperDual>(xd));
    for (std::size_t i = 0; i < rows; ++i)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[i].d1;
  });
  return out;
}

}  // namespace lrvb
