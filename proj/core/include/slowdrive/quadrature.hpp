#pragma once

#include <functional>
#include <span>
#include <vector>

#include "slowdrive/hermitian.hpp"

namespace slowdrive {

// Gauss–Legendre rule on [-1, 1] (Golub–Welsch).
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const GaussRule& gauss_legendre(int order);

struct QuadratureResult {
  Matrix integral;
  double gap = 0.0;  // |order-8 − order-7| summed over panels
  int panels = 0;
};

// ∫_a^b f with composite order-8 Gauss–Legendre, panels doubled on each
// sub-interval (cut at `splits`) until the order-7 estimate agrees to `tol`
// relative to the sub-interval's share of [a, b]. Throws NumericalError
// after `max_panels`.
QuadratureResult integrate(const std::function<Matrix(double)>& f, double a, double b,
                           std::span<const double> splits = {}, double tol = 1e-9,
                           int max_panels = 4096);

}  // namespace slowdrive
