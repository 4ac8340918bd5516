#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "lrvb/conjugate_normal.hpp"
#include "lrvb/errors.hpp"
#include "lrvb/gaussian_target.hpp"
#include "lrvb/lrvb.hpp"
#include "lrvb/microcredit.hpp"
#include "lrvb/optimize.hpp"
#include "oracles.hpp"

using namespace lrvb;

namespace {

// Conjugate model with an extra prior entry that nothing depends on.
class PaddedConjugateModel final : public ModelBase<PaddedConjugateModel> {
 public:
  PaddedConjugateModel() : inner_({1.0}, 1.0) {}
  std::string_view name() const override { return "padded"; }
  const CoordinateLayout& layout() const override { return inner_.layout(); }
  const std::vector<std::string>& alpha_names() const override {
    static const std::vector<std::string> kNames = {"prior_mean", "prior_precision", "unused"};
    return kNames;
  }
  std::vector<double> default_alpha() const override { return {0.0, 1.0, 15.01}; }
  double log_joint(std::span<const double> theta, std::span<const double> alpha) const override {
    return inner_.log_joint(theta, alpha.first(2));
  }
  std::vector<double> initial_xi() const override { return inner_.initial_xi(); }
  template <class T>
  T kl_t(std::span<const T> xi, std::span<const T> alpha) const {
    return inner_.kl_t<T>(xi, alpha.first(2));
  }
  template <class T>
  T expected_log_prior_t(std::span<const T> xi, std::span<const T> alpha) const {
    return inner_.expected_log_prior_t<T>(xi, alpha.first(2));
  }

 private:
  ConjugateNormalModel inner_;
};

struct Fitted {
  FitResult fit;
  LrvbSolution lr;
};

Fitted fit_and_solve(const VariationalModel& model, const std::vector<double>& alpha) {
  Fitted f{lrvb::fit(model, alpha), {}};
  REQUIRE(f.fit.converged);
  f.lr = lrvb_covariance(model, alpha, f.fit.xi_star);
  return f;
}

MicrocreditModel fixture_model(ScaleCoordinates scale = ScaleCoordinates::kLog) {
  return MicrocreditModel(read_dataset_csv_file(oracle::data_path("microcredit_k7.csv")), {21, scale});
}

}  // namespace

TEST_CASE("identity target has unit curvature in the means") {
  const GaussianTargetModel model(Eigen::Vector2d(1.0, 2.0), Eigen::Matrix2d::Identity());
  const Eigen::MatrixXd h = kl_hessian(model, model.default_alpha(), model.optimum_xi());
  CHECK(h(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(h(2, 2) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(h(0, 2) == 0.0);
}

TEST_CASE("conjugate linear response") {
  const ConjugateNormalModel model({1.0}, 1.0, 0.0, 1.0);
  const Fitted f = fit_and_solve(model, model.default_alpha());
  CHECK(f.lr.hessian(0, 0) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(std::abs(f.lr.lrvb_cov(0, 0) - 0.5) <= 1e-10);
  CHECK(std::abs(f.lr.mfvb_cov(0, 0) - 0.5) <= 1e-10);

  const Eigen::MatrixXd cross = cross_hessian(model, model.default_alpha(), f.fit.xi_star);
  CHECK(cross(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

  const SensitivityReport s = prior_sensitivity(model, model.default_alpha(), f.fit.xi_star, f.lr);
  CHECK(std::abs(s.raw(0, 1) - (-0.25)) <= 1e-10);
  CHECK(std::abs(s.raw(0, 0) - 0.5) <= 1e-10);
}

TEST_CASE("correlated gaussian target: linear response recovers the covariance") {
  Eigen::Matrix2d cov;
  cov << 1.0, 0.5, 0.5, 1.0;
  const GaussianTargetModel model(Eigen::Vector2d(0.0, 0.0), cov);
  const Fitted f = fit_and_solve(model, model.default_alpha());
  CHECK(std::abs(f.lr.mfvb_cov(0, 0) - 0.75) <= 1e-10);
  CHECK(std::abs(f.lr.mfvb_cov(1, 1) - 0.75) <= 1e-10);
  CHECK(oracle::rel_error(f.lr.lrvb_cov, cov) <= 1e-8);
  for (int i = 0; i < 2; ++i) CHECK(f.lr.lrvb_cov(i, i) >= f.lr.mfvb_cov(i, i));
}

TEST_CASE("factorized target: linear response changes nothing") {
  const Eigen::Vector3d var(0.5, 2.0, 3.5);
  const GaussianTargetModel model(Eigen::Vector3d::Zero(), var.asDiagonal().toDenseMatrix());
  const Fitted f = fit_and_solve(model, model.default_alpha());
  CHECK((f.lr.lrvb_cov - f.lr.mfvb_cov).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("Hessian is exactly symmetric and the covariance is PSD") {
  const auto model = fixture_model();
  const Fitted f = fit_and_solve(model, model.default_alpha());
  CHECK((f.lr.hessian - f.lr.hessian.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((f.lr.lrvb_cov - f.lr.lrvb_cov.transpose()).cwiseAbs().maxCoeff() == 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(f.lr.lrvb_cov);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-12 * eig.eigenvalues().maxCoeff());
  // Mean-field underestimation of the global effects.
  CHECK(f.lr.mfvb_sd()[0] <= f.lr.lrvb_sd()[0]);
  CHECK(f.lr.mfvb_sd()[1] <= f.lr.lrvb_sd()[1]);
}

TEST_CASE("indefinite Hessian is a singularity error") {
  const auto model = fixture_model();
  std::mt19937_64 rng(12);
  std::normal_distribution<double> normal(0.0, 1.5);
  bool found = false;
  for (int rep = 0; rep < 200 && !found; ++rep) {
    std::vector<double> xi = model.initial_xi();
    for (double& x : xi) x += normal(rng);
    const Eigen::MatrixXd h = kl_hessian(model, model.default_alpha(), xi);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
    if (eig.eigenvalues().minCoeff() < 0.0) {
      found = true;
      CHECK_THROWS_AS(lrvb_covariance(model, model.default_alpha(), xi), SingularityError);
    }
  }
  CHECK(found);
}

TEST_CASE("cross Hessian sparsity") {
  const PaddedConjugateModel padded;
  const std::vector<double> alpha = padded.default_alpha();
  const Eigen::MatrixXd c = cross_hessian(padded, alpha, padded.initial_xi());
  CHECK(c.col(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(c(0, 0) == doctest::Approx(1.0));

  const auto model = fixture_model();
  const Fitted f = fit_and_solve(model, model.default_alpha());
  const Eigen::MatrixXd micro = cross_hessian(model, model.default_alpha(), f.fit.xi_star);
  const auto& global = model.layout().slots()[model.global_slot()];
  const Eigen::VectorXd col = micro.col(static_cast<Eigen::Index>(model.alpha_index("lambda_11")));
  for (Eigen::Index i = 0; i < col.size(); ++i) {
    const bool in_global = static_cast<std::size_t>(i) >= global.offset &&
                           static_cast<std::size_t>(i) < global.offset + global.size;
    if (!in_global) CHECK(col[i] == 0.0);
  }
  CHECK(col.segment(static_cast<Eigen::Index>(global.offset), 5).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("zero direction gives zero sensitivity and normalization is consistent") {
  const auto model = fixture_model();
  const Fitted f = fit_and_solve(model, model.default_alpha());
  const Eigen::Index m = static_cast<Eigen::Index>(model.alpha_names().size());
  Eigen::MatrixXd dirs = Eigen::MatrixXd::Zero(m, 2);
  dirs(0, 1) = 1.0;
  const SensitivityReport s =
      prior_sensitivity(model, model.default_alpha(), f.fit.xi_star, f.lr, dirs, {"zero", "lambda_11"});
  CHECK(s.raw.col(0).cwiseAbs().maxCoeff() == 0.0);
  const SensitivityReport all = prior_sensitivity(model, model.default_alpha(), f.fit.xi_star, f.lr);
  CHECK((s.raw.col(1) - all.raw.col(0)).cwiseAbs().maxCoeff() <= 1e-14);
  const Eigen::VectorXd sd = f.lr.lrvb_sd();
  for (Eigen::Index i = 0; i < all.raw.rows(); ++i)
    for (Eigen::Index j = 0; j < all.raw.cols(); ++j)
      CHECK(std::abs(all.normalized(i, j) * sd[i] - all.raw(i, j)) <= 1e-12 * std::max(1.0, std::abs(all.raw(i, j))));
  CHECK(all.direction_names == model.alpha_names());
  CHECK_THROWS_AS(prior_sensitivity(model, model.default_alpha(), f.fit.xi_star, f.lr, Eigen::MatrixXd::Zero(3, 1),
                                    {"bad"}),
                  ParameterError);
}

TEST_CASE("perturbation sensitivity special cases") {
  Eigen::Matrix3d cov;
  cov << 1.5, 0.4, -0.3, 0.4, 1.0, 0.2, -0.3, 0.2, 0.8;
  const GaussianTargetModel target(Eigen::Vector3d(0.1, 0.2, 0.3), cov);
  const Fitted t = fit_and_solve(target, target.default_alpha());
  const Eigen::VectorXd zero =
      perturbation_sensitivity(t.fit.xi_star, t.lr, [](std::span<const HyperDual>) { return HyperDual(3.0); });
  CHECK(zero.cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < 3; ++i) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(3);
    w[i] = -1.0;
    const Eigen::VectorXd row = perturbation_sensitivity(t.fit.xi_star, t.lr, linear_moment_perturbation(target, w));
    CHECK((row - t.lr.lrvb_cov.row(i).transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  }

  const ConjugateNormalModel conj({1.0, 2.0}, 0.7, 0.3, 1.5);
  const std::vector<double> alpha = conj.default_alpha();
  const Fitted c = fit_and_solve(conj, alpha);
  const SensitivityReport s = prior_sensitivity(conj, alpha, c.fit.xi_star, c.lr);
  for (std::size_t j = 0; j < 2; ++j) {
    // f(ξ) = -∂ℓ/∂α_j, with ℓ = ½log λ - ½log 2π - ½λ((m - μ0)² + v).
    const Perturbation f = [&conj, alpha, j](std::span<const HyperDual> xi) {
      const auto q = conj.layout().factor_1d(xi, 0);
      const HyperDual d = q.mean - alpha[0];
      if (j == 0) return -(alpha[1] * d);
      return -(0.5 / alpha[1] - 0.5 * (d * d + q.variance()));
    };
    const Eigen::VectorXd col = perturbation_sensitivity(c.fit.xi_star, c.lr, f);
    CHECK(std::abs(col[0] - s.raw(0, static_cast<Eigen::Index>(j))) <= 1e-12);
  }
}

TEST_CASE("sensitivities match finite-difference refits") {
  const auto model = fixture_model();
  const std::vector<double> alpha = model.default_alpha();
  const Fitted f = fit_and_solve(model, alpha);
  const SensitivityReport s = prior_sensitivity(model, alpha, f.fit.xi_star, f.lr);
  const std::size_t j = model.alpha_index("lambda_11");
  const double h = 1e-3;
  std::vector<long double> plus(alpha.begin(), alpha.end());
  std::vector<long double> minus = plus;
  plus[j] += h;
  minus[j] -= h;
  const auto mp = oracle::refit_means_ld(model, plus, f.fit.xi_star);
  const auto mm = oracle::refit_means_ld(model, minus, f.fit.xi_star);
  for (std::size_t i = 0; i < mp.size(); ++i) {
    const double pred = s.raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    if (std::abs(pred) <= 1e-6) continue;
    const double fd = static_cast<double>((mp[i] - mm[i]) / (2.0L * h));
    CAPTURE(i);
    CHECK(std::abs(fd - pred) <= 1e-3 * std::abs(pred));
  }
  // Discrepancy shrinks at the second-order rate as the step halves.
  const Eigen::VectorXd col = s.raw.col(static_cast<Eigen::Index>(j));
  const double e2 = oracle::fd_sensitivity_error(model, alpha, f.fit.xi_star, col, j, 2e-3);
  const double e1 = oracle::fd_sensitivity_error(model, alpha, f.fit.xi_star, col, j, 1e-3);
  CHECK(e2 / e1 >= 3.0);
}

TEST_CASE("covariance and sensitivities do not depend on the scale coordinates") {
  const auto log_model = fixture_model(ScaleCoordinates::kLog);
  const auto lin_model = fixture_model(ScaleCoordinates::kLinear);
  const std::vector<double> alpha = log_model.default_alpha();
  const Fitted a = fit_and_solve(log_model, alpha);
  const std::vector<double> lin_xi = log_model.layout().convert(a.fit.xi_star, ScaleCoordinates::kLinear);
  const LrvbSolution b = lrvb_covariance(lin_model, alpha, lin_xi);
  CHECK(oracle::rel_error(b.lrvb_cov, a.lr.lrvb_cov) <= 1e-8);
  const auto sa = prior_sensitivity(log_model, alpha, a.fit.xi_star, a.lr);
  const auto sb = prior_sensitivity(lin_model, alpha, lin_xi, b);
  CHECK(oracle::rel_error(sb.raw, sa.raw) <= 1e-8);
}

TEST_CASE("unit directions") {
  const auto model = fixture_model();
  const Eigen::VectorXd d = unit_direction(model, "lambda_12");
  CHECK(d.sum() == 1.0);
  CHECK(d[static_cast<Eigen::Index>(model.alpha_index("lambda_12"))] == 1.0);
  CHECK_THROWS_AS(unit_direction(model, "nope"), ParameterError);
}
