#include "lrvb/quadrature.hpp"

#include <array>
#include <map>
#include <memory>
#include <mutex>

#include <Eigen/Eigenvalues>

namespace lrvb {

GaussHermiteRule::GaussHermiteRule(std::size_t nodes) {
  if (nodes == 0) throw ParameterError("gauss_hermite: need at least one node");
  const auto n = static_cast<Eigen::Index>(nodes);
  // Jacobi matrix of the Hermite recurrence: zero diagonal, sqrt(i/2) off it.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 1; i < n; ++i) {
    const double b = std::sqrt(static_cast<double>(i) / 2.0);
    jacobi(i, i - 1) = b;
    jacobi(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  nodes_.resize(nodes);
  weights_.resize(nodes);
  for (std::size_t i = 0; i < nodes; ++i) nodes_[i] = eig.eigenvalues()[static_cast<Eigen::Index>(i)];
  // Orthonormal Hermite polynomials at x: returns {p_n(x), p_{n-1}(x), sum_{k<n} p_k(x)²}.
  auto hermite = [nodes](double x) {
    double prev = 0.0;
    double cur = 1.0 / std::sqrt(std::sqrt(std::numbers::pi));
    double sum_sq = 0.0;
    for (std::size_t k = 0; k < nodes; ++k) {
      sum_sq += cur * cur;
      const double next = std::sqrt(2.0 / static_cast<double>(k + 1)) * x * cur -
                          std::sqrt(static_cast<double>(k) / static_cast<double>(k + 1)) * prev;
      prev = cur;
      cur = next;
    }
    return std::array<double, 3>{cur, prev, sum_sq};
  };
  // Newton polish of the eigenvalues, then Christoffel weights. The eigenvector
  // route loses relative accuracy in the small tail weights.
  const double dn = std::sqrt(2.0 * static_cast<double>(nodes));
  for (std::size_t i = 0; i < nodes; ++i) {
    double x = nodes_[i];
    for (int it = 0; it < 3; ++it) {
      const auto h = hermite(x);
      if (h[1] == 0.0) break;
      x -= h[0] / (dn * h[1]);
    }
    nodes_[i] = x;
    weights_[i] = 1.0 / hermite(x)[2];
  }
  // Symmetrize: the rule is exactly symmetric about zero.
  for (std::size_t i = 0, j = nodes - 1; i < j; ++i, --j) {
    const double x = 0.5 * (nodes_[j] - nodes_[i]);
    const double w = 0.5 * (weights_[i] + weights_[j]);
    nodes_[i] = -x;
    nodes_[j] = x;
    weights_[i] = weights_[j] = w;
  }
  if (nodes % 2 == 1) nodes_[nodes / 2] = 0.0;

  double total = 0.0;
  for (double w : weights_) total += w;
  prob_weights_.resize(nodes);
  for (std::size_t i = 0; i < nodes; ++i) prob_weights_[i] = weights_[i] / total;
  // Adjust the central weight so that the summation order used by
  // `expectation` gives exactly one; constants then integrate exactly.
  last_ = nodes / 2;
  double head = 0.0;
  for (std::size_t i = 0; i < nodes; ++i)
    if (i != last_) head += prob_weights_[i];
  prob_weights_[last_] = 1.0 - head;
}

const GaussHermiteRule& gauss_hermite_rule(std::size_t nodes) {
  static std::mutex mutex;
  static std::map<std::size_t, std::unique_ptr<GaussHermiteRule>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[nodes];
  if (!slot) slot = std::make_unique<GaussHermiteRule>(nodes);
  return *slot;
}

}  // namespace lrvb
