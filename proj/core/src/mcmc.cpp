#include "lrvb/mcmc.hpp"

#include <chrono>
#include <cmath>
#include <algorithm>
#include <cstdio>
#include <ostream>
#include <random>

#include <Eigen/Cholesky>

#include "lrvb/errors.hpp"
#include "lrvb/rng.hpp"

namespace lrvb {
namespace {

// Cholesky of a proposal covariance, jittering the diagonal until it factors.
Eigen::MatrixXd proposal_factor(Eigen::MatrixXd cov) {
  const Eigen::Index d = cov.rows();
  double jitter = 1e-12 * std::max(1.0, cov.diagonal().cwiseAbs().maxCoeff());
  for (int attempt = 0; attempt < 30; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    cov += jitter * Eigen::MatrixXd::Identity(d, d);
    jitter *= 10.0;
  }
  throw DiagnosticsError("proposal covariance is not positive definite");
}

}  // namespace

double batch_means_mcse(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n < 4) return std::numeric_limits<double>::quiet_NaN();
  const auto batches = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  const std::size_t size = n / batches;
  std::vector<double> means(batches, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t i = 0; i < size; ++i) means[b] += series[b * size + i];
    means[b] /= static_cast<double>(size);
  }
  double grand = 0.0;
  for (double m : means) grand += m;
  grand /= static_cast<double>(batches);
  double ss = 0.0;
  for (double m : means) ss += (m - grand) * (m - grand);
  return std::sqrt(ss / static_cast<double>(batches - 1) / static_cast<double>(batches));
}

ChainResult sample(const LogDensity& log_density, std::vector<double> start, const McmcOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto d = static_cast<Eigen::Index>(start.size());
  if (d == 0) throw ParameterError("mcmc: empty parameter vector");
  if (options.draws == 0) throw ParameterError("mcmc: need at least one draw");
  const std::size_t thin = std::max<std::size_t>(options.thin, 1);
  const double scale2 = 2.38 * 2.38 / static_cast<double>(d);

  std::mt19937_64 engine = make_engine(options.seed, Stream::kMcmc);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  Eigen::MatrixXd chol;
  if (options.initial_cov) {
    if (options.initial_cov->rows() != d || options.initial_cov->cols() != d)
      throw ParameterError("mcmc: initial covariance has the wrong shape");
    chol = proposal_factor(scale2 * *options.initial_cov);
  } else {
    chol = options.initial_scale * Eigen::MatrixXd::Identity(d, d);
  }

  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(start.data(), d);
  double lp = log_density(start);
  if (!std::isfinite(lp)) throw DiagnosticsError("mcmc: log density is not finite at the starting point");

  double step_scale = 1.0;
  std::vector<double> buf(static_cast<std::size_t>(d));
  Eigen::VectorXd z(d);
  auto step = [&]() -> bool {
    for (Eigen::Index i = 0; i < d; ++i) z[i] = normal(engine);
    const Eigen::VectorXd proposal = x + step_scale * (chol * z);
    for (Eigen::Index i = 0; i < d; ++i) buf[static_cast<std::size_t>(i)] = proposal[i];
    const double lp_new = log_density(buf);
    const double u = uniform(engine);
    if (std::isfinite(lp_new) && std::log(u) < lp_new - lp) {
      x = proposal;
      lp = lp_new;
      return true;
    }
    return false;
  };

  // Warmup: the covariance estimate accumulates over every warmup draw after
  // the first window and is refreshed at the end of doubling windows (100,
  // 200, 400, ...) until the last fifth of warmup. A global log-scale factor
  // tracks acceptance rate 0.234 throughout.
  double log_lambda = 0.0;
  std::size_t warm_accepted = 0;
  std::size_t window_len = 100;
  std::size_t window_end = std::min(window_len, options.warmup);
  std::size_t n_acc = 0;
  const std::size_t tail = options.warmup / 5;  // scale-only adaptation at the end
  Eigen::VectorXd run_mean = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd run_m2 = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t it = 1; it <= options.warmup; ++it) {
    const bool acc = step();
    if (acc) ++warm_accepted;
    log_lambda += (static_cast<double>(acc) - 0.234) / std::sqrt(static_cast<double>(it) + 10.0);
    log_lambda = std::clamp(log_lambda, -10.0, 10.0);
    if (it > std::min<std::size_t>(100, options.warmup / 2)) {
      ++n_acc;
      const Eigen::VectorXd delta = x - run_mean;
      run_mean += delta / static_cast<double>(n_acc);
      run_m2 += delta * (x - run_mean).transpose();
    }
    if (it == window_end && it + tail <= options.warmup) {
      if (n_acc > static_cast<std::size_t>(2 * d))
        chol = proposal_factor(scale2 / static_cast<double>(n_acc - 1) * run_m2);
      window_len *= 2;
      window_end = it + window_len;
      if (window_end + tail > options.warmup) window_end = options.warmup - tail;
    }
    step_scale = std::exp(log_lambda);
  }
  if (options.warmup > 0 && warm_accepted == 0)
    throw DiagnosticsError("mcmc: no proposal accepted during warmup; try a smaller initial step");

  ChainResult out;
  out.seed = options.seed;
  out.proposal_cov = step_scale * step_scale * (chol * chol.transpose());
  out.draws.resize(static_cast<Eigen::Index>(options.draws), d);
  std::size_t accepted = 0;
  for (std::size_t r = 0; r < options.draws; ++r) {
    for (std::size_t t = 0; t < thin; ++t)
      if (step()) ++accepted;
    out.draws.row(static_cast<Eigen::Index>(r)) = x.transpose();
  }
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(options.draws * thin);

  out.means = out.draws.colwise().mean();
  out.sds.resize(d);
  out.mcse.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const Eigen::VectorXd col = out.draws.col(j);
    const double var = (col.array() - out.means[j]).square().sum() / std::max<double>(1.0, static_cast<double>(col.size() - 1));
    out.sds[j] = std::sqrt(var);
    out.mcse[j] = batch_means_mcse(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
  }
  out.constrained_draws = out.draws;
  for (Eigen::Index j = 0; j < d; ++j) {
    out.names.push_back("theta_" + std::to_string(j + 1));
  }
  out.constrained_names = out.names;
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

ChainResult sample(const VariationalModel& model, std::span<const double> alpha, std::vector<double> start,
                   const McmcOptions& options) {
  model.check_alpha(alpha);
  if (start.size() != model.layout().theta_dim()) throw ParameterError("mcmc: start has the wrong dimension");
  std::vector<double> a(alpha.begin(), alpha.end());
  ChainResult out = sample([&model, &a](std::span<const double> theta) { return model.log_joint(theta, a); },
                           std::move(start), options);
  out.names = model.layout().theta_names();
  out.constrained_names = model.constrained_names();
  std::vector<double> row(static_cast<std::size_t>(out.draws.cols()));
  for (Eigen::Index r = 0; r < out.draws.rows(); ++r) {
    for (Eigen::Index j = 0; j < out.draws.cols(); ++j) row[static_cast<std::size_t>(j)] = out.draws(r, j);
    const std::vector<double> c = model.to_constrained(row);
    for (Eigen::Index j = 0; j < out.draws.cols(); ++j) out.constrained_draws(r, j) = c[static_cast<std::size_t>(j)];
  }
  return out;
}

ComparisonTable compare(const std::vector<std::string>& names, const Eigen::VectorXd& vb_mean,
                        const Eigen::VectorXd& mfvb_sd, const Eigen::VectorXd& lrvb_sd, const ChainResult& chain) {
  if (chain.draws.rows() == 0) throw SchemaError("compare: chain has no draws");
  const auto d = static_cast<Eigen::Index>(names.size());
  if (vb_mean.size() != d || mfvb_sd.size() != d || lrvb_sd.size() != d || chain.draws.cols() != d ||
      chain.means.size() != d)
    throw SchemaError("compare: VB and MCMC parameter layouts differ");
  if (!chain.names.empty() && chain.names != names) throw SchemaError("compare: parameter names differ");
  ComparisonTable t;
  for (Eigen::Index i = 0; i < d; ++i) {
    ComparisonRow r{names[static_cast<std::size_t>(i)], vb_mean[i], chain.means[i], chain.mcse[i],
                    mfvb_sd[i],                         lrvb_sd[i], chain.sds[i]};
    t.max_abs_mean_z = std::max(t.max_abs_mean_z, std::abs(r.vb_mean - r.mcmc_mean) / r.mcmc_mcse);
    t.max_rel_lrvb_sd_error = std::max(t.max_rel_lrvb_sd_error, std::abs(r.lrvb_sd - r.mcmc_sd) / r.mcmc_sd);
    t.max_rel_mfvb_sd_error = std::max(t.max_rel_mfvb_sd_error, std::abs(r.mfvb_sd - r.mcmc_sd) / r.mcmc_sd);
    t.rows.push_back(std::move(r));
  }
  return t;
}

void write_draws_csv(std::ostream& out, const ChainResult& chain) {
  for (std::size_t j = 0; j < chain.constrained_names.size(); ++j) out << (j ? "," : "") << chain.constrained_names[j];
  out << '\n';
  char buf[64];
  for (Eigen::Index r = 0; r < chain.constrained_draws.rows(); ++r) {
    for (Eigen::Index j = 0; j < chain.constrained_draws.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", chain.constrained_draws(r, j));
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
}

}  // namespace lrvb
