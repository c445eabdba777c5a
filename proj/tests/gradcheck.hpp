#pragma once

#include "sfanet/nn.hpp"

#include <doctest.h>

#include <functional>

namespace gradcheck {

using sfanet::matrix_t;

/// ||a - n|| / max(||a||, ||n||). The floor covers gradients that are exactly
/// zero (attention key biases), where central differences only return rounding noise.
inline double rel(const matrix_t& a, const matrix_t& n) {
  const double d = std::max({a.norm(), n.norm(), 1e-4});
  return (a - n).norm() / d;
}

/// Central differences of `loss` against every entry of `x`.
inline matrix_t numeric(matrix_t& x, const std::function<double()>& loss, double h = 1e-6) {
  matrix_t g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x(i);
    x(i) = keep + h;
    const double up = loss();
    x(i) = keep - h;
    const double down = loss();
    x(i) = keep;
    g(i) = (up - down) / (2 * h);
  }
  return g;
}

/// Analytic parameter gradients (already accumulated by the caller) against central differences.
inline void check_params(const sfanet::nn::ParamList& params, const std::function<double()>& loss,
                         double tol = 1e-4) {
  for (auto* p : params) {
    const matrix_t analytic = p->grad;
    const matrix_t num = numeric(p->value, loss);
    INFO("param " << p->name);
    CHECK(rel(analytic, num) <= tol);
  }
}

}  // namespace gradcheck
