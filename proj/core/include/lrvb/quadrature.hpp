#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "lrvb/errors.hpp"

namespace lrvb {

/// Physicists' Gauss–Hermite rule (weight e^{-x²}): Golub–Welsch nodes refined
/// by Newton steps, Christoffel weights. Exact for polynomials of degree <= 2n-1.
class GaussHermiteRule {
 public:
  explicit GaussHermiteRule(std::size_t nodes = 21);

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<double>& nodes() const noexcept { return nodes_; }
  /// Physicists' weights (sum to sqrt(pi)).
  const std::vector<double>& weights() const noexcept { return weights_; }
  /// Weights normalized to sum to one, as used by `expectation`.
  const std::vector<double>& probability_weights() const noexcept { return prob_weights_; }

  /// E[g(X)] for X ~ N(mean, sd²). T may be double or HyperDual.
  template <class T, class G>
  T expectation(const G& g, const T& mean, const T& sd) const {
    if (!(sd > 0.0)) throw ParameterError("gauss_hermite: sd must be positive");
    T acc = 0.0;
    const double scale = std::numbers::sqrt2;
    auto term = [&](std::size_t i) { return prob_weights_[i] * g(mean + sd * (scale * nodes_[i])); };
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (i != last_) acc += term(i);
    acc += term(last_);
    return acc;
  }

 private:
  std::vector<double> nodes_;
  std::vector<double> weights_;
  std::vector<double> prob_weights_;
  std::size_t last_ = 0;  // central node, summed last
};

/// Shared rule for a node count; built on first use.
const GaussHermiteRule& gauss_hermite_rule(std::size_t nodes);

template <class T, class G>
T gauss_hermite(const G& g, const T& mean, const T& sd, std::size_t nodes) {
  return gauss_hermite_rule(nodes).expectation(g, mean, sd);
}

}  // namespace lrvb
