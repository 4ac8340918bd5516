#include <doctest.h>

#include <numbers>

#include "lrvb/errors.hpp"
#include "lrvb/quadrature.hpp"
#include "lrvb/varfamily.hpp"
#include "oracles.hpp"

using namespace lrvb;

TEST_CASE("entropy of standard factors") {
  CHECK(entropy(GaussianFactor1D<double>{0.0, 0.0}) == doctest::Approx(1.4189385332046727).epsilon(1e-15));
  CHECK(entropy(GaussianFactor2D<double>{{0.0, 0.0}, 0.0, 0.0, 0.0}) ==
        doctest::Approx(2.8378770664093453).epsilon(1e-15));
}

TEST_CASE("entropy ignores the mean coordinates exactly") {
  CHECK(entropy(GaussianFactor1D<double>{5.0, 0.0}) == entropy(GaussianFactor1D<double>{0.0, 0.0}));
  CHECK(entropy(GaussianFactor1D<double>{-3.0, 0.4}) == entropy(GaussianFactor1D<double>{1e6, 0.4}));
  CHECK(entropy(GaussianFactor2D<double>{{9.0, -2.0}, 0.1, 0.3, -0.2}) ==
        entropy(GaussianFactor2D<double>{{0.0, 0.0}, 0.1, 0.3, -0.2}));
}

TEST_CASE("moments of factors") {
  const auto m1 = moments(GaussianFactor1D<double>{2.0, 0.0});
  CHECK(m1[0] == 2.0);
  CHECK(m1[1] == 1.0);
  const auto m2 = moments(GaussianFactor2D<double>{{0.0, 0.0}, 0.0, 0.5, 0.0});
  CHECK(m2.cov11 == 1.0);
  CHECK(m2.cov12 == 0.5);
  CHECK(m2.cov22 == 1.25);
}

TEST_CASE("moments invert construction from moments") {
  Eigen::Matrix2d cov;
  cov << 2.3, -0.7, -0.7, 0.9;
  const auto f = factor_from_moments({1.5, -0.25}, cov);
  const auto m = moments(f);
  CHECK(m.mean[0] == 1.5);
  CHECK(m.mean[1] == -0.25);
  CHECK(std::abs(m.cov11 - 2.3) <= 1e-12);
  CHECK(std::abs(m.cov12 + 0.7) <= 1e-12);
  CHECK(std::abs(m.cov22 - 0.9) <= 1e-12);
  const auto g = moments(factor_from_moments(0.3, 0.04));
  CHECK(g[0] == 0.3);
  CHECK(std::abs(g[1] - 0.04) <= 1e-12);
}

TEST_CASE("gauss-hermite basic expectations") {
  const auto x2 = gauss_hermite([](double x) { return x * x; }, 0.0, 1.0, 21);
  CHECK(std::abs(x2 - 1.0) <= 1e-12);
  CHECK(gauss_hermite([](double) { return 1.0; }, 0.3, 2.0, 21) == 1.0);
  double wsum = 0.0;
  for (double w : gauss_hermite_rule(21).weights()) wsum += w;
  CHECK(wsum == doctest::Approx(std::sqrt(std::numbers::pi)).epsilon(1e-14));
}

TEST_CASE("gauss-hermite rejects non-positive sd") {
  CHECK_THROWS_AS(gauss_hermite([](double x) { return x; }, 0.0, 0.0, 21), ParameterError);
  CHECK_THROWS_AS(gauss_hermite([](double x) { return x; }, 0.0, -1.0, 21), ParameterError);
}

TEST_CASE("gauss-hermite integrates monomials up to degree 2n-1") {
  // Exact E[X^k] for X ~ N(m, s²) via the binomial expansion with normal moments.
  auto exact = [](int k, long double m, long double s) {
    long double acc = 0.0L;
    long double binom = 1.0L;
    long double dfact = 1.0L;  // (j-1)!! for even j
    for (int j = 0; j <= k; ++j) {
      if (j > 0) binom = binom * (k - j + 1) / j;
      if (j % 2 == 0) {
        if (j > 0) dfact *= (j - 1);
        acc += binom * std::pow(m, k - j) * std::pow(s, j) * dfact;
      }
    }
    return acc;
  };
  for (std::size_t n : {1u, 5u, 21u}) {
    for (auto [m, s] : {std::pair{0.7, 1.3}, std::pair{-2.0, 0.5}, std::pair{0.0, 1.0}}) {
      for (int k = 0; k <= static_cast<int>(2 * n - 1); ++k) {
        const double gh = gauss_hermite([k](double x) { return std::pow(x, k); }, m, s, n);
        const double scale = gauss_hermite([k](double x) { return std::pow(std::abs(x), k); }, m, s, n);
        const double ex = static_cast<double>(exact(k, m, s));
        CHECK(std::abs(gh - ex) <= 1e-10 * std::max(std::abs(ex), scale));
      }
    }
  }
}

TEST_CASE("gauss-hermite matches a dense trapezoid rule on the LKJ integrand") {
  const double eta = 15.01;
  const double sd = 0.5;
  auto g = [eta](double x) { return (eta - 1.0) * std::log(1.0 - std::tanh(x) * std::tanh(x)); };
  const double gh = gauss_hermite([&](double x) { return (eta - 1.0) * log1m_tanh_sq(x); }, 0.0, sd, 21);
  const double grid = oracle::trapezoid([&](double x) { return g(x) * oracle::normal_pdf(x, 0.0, sd); }, -8 * sd,
                                        8 * sd, 20000);
  CHECK(std::abs(gh - grid) <= 1e-8 * std::abs(grid));
}

TEST_CASE("log1m_tanh_sq is stable for large arguments") {
  CHECK(log1m_tanh_sq(0.0) == 0.0);
  CHECK(log1m_tanh_sq(30.0) == doctest::Approx(2 * (std::log(2.0) - 30.0)).epsilon(1e-15));
  CHECK(log1m_tanh_sq(0.3) == doctest::Approx(std::log(1 - std::tanh(0.3) * std::tanh(0.3))).epsilon(1e-14));
}

TEST_CASE("layout covers every coordinate once") {
  CoordinateLayout layout;
  layout.add_2d("pair", "a", "b");
  layout.add_1d("c");
  layout.add_1d("d");
  CHECK(layout.xi_dim() == 9);
  CHECK(layout.theta_dim() == 4);
  CHECK_NOTHROW(layout.validate());
  CHECK(layout.theta_index("c") == 2);
  std::size_t next = 0;
  for (const auto& s : layout.slots()) {
    CHECK(s.offset == next);
    next += s.size;
  }
  CHECK(next == layout.xi_dim());
  const std::vector<double> xi{1, 2, 0, 0, 0, 3, 0, 4, 0};
  const auto m = layout.theta_mean(std::span<const double>(xi));
  CHECK(m == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("layout rejects duplicate parameter names") {
  CoordinateLayout layout;
  layout.add_1d("a");
  CHECK_THROWS_AS(layout.add_1d("a"), SchemaError);
  CHECK_THROWS_AS(layout.add_2d("p", "b", "a"), SchemaError);
}

TEST_CASE("scale conversion round trips") {
  CoordinateLayout log_layout(ScaleCoordinates::kLog);
  log_layout.add_2d("pair", "a", "b");
  log_layout.add_1d("c");
  CoordinateLayout lin_layout(ScaleCoordinates::kLinear);
  lin_layout.add_2d("pair", "a", "b");
  lin_layout.add_1d("c");
  const std::vector<double> xi{0.5, -1.0, 0.2, 0.3, -0.4, 2.0, -0.7};
  const auto lin = log_layout.convert(xi, ScaleCoordinates::kLinear);
  CHECK(lin[2] == doctest::Approx(std::exp(0.2)));
  CHECK(lin_layout.mfvb_covariance(lin).isApprox(log_layout.mfvb_covariance(xi), 1e-14));
  const auto back = lin_layout.convert(lin, ScaleCoordinates::kLog);
  for (std::size_t i = 0; i < xi.size(); ++i) CHECK(back[i] == doctest::Approx(xi[i]).epsilon(1e-15));
  CHECK(lin_layout.total_entropy(std::span<const double>(lin)) ==
        doctest::Approx(log_layout.total_entropy(std::span<const double>(xi))).epsilon(1e-15));
}
