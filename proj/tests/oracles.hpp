#pragma once

#include <type_traits>

// Independent reference computations used only by the tests. Nothing here
// calls into the library's numerical kernels.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <functional>
#include <random>

namespace oracle {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;

inline Matrix random_hermitian(Eigen::Index dim, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) m(i, j) = Complex(nd(rng), nd(rng));
  return 0.5 * (m + m.adjoint());
}

// exp(m) by scaling and squaring of a truncated Taylor series.
inline Matrix series_exp(const Matrix& m) {
  const double nrm = m.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  double scaled = nrm;
  while (scaled > 0.25) {
    scaled *= 0.5;
    ++squarings;
  }
  const Matrix a = m / std::pow(2.0, squarings);
  Matrix term = Matrix::Identity(m.rows(), m.cols());
  Matrix sum = term;
  for (int k = 1; k < 30; ++k) {
    term = term * a / static_cast<double>(k);
    sum += term;
  }
  for (int s = 0; s < squarings; ++s) sum = sum * sum;
  return sum;
}

// e^{-iHt}
inline Matrix propagator(const Matrix& h, double t) { return series_exp(h * Complex(0.0, -t)); }

// Fourth-order Runge-Kutta on iU' = H(t)U with a fixed number of steps.
inline Matrix rk4_propagator(const std::function<Matrix(double)>& h, double t0, double t1, int steps) {
  const Eigen::Index d = h(t0).rows();
  Matrix u = Matrix::Identity(d, d);
  const double dt = (t1 - t0) / steps;
  const Complex mi(0.0, -1.0);
  for (int k = 0; k < steps; ++k) {
    const double t = t0 + k * dt;
    const Matrix k1 = mi * h(t) * u;
    const Matrix k2 = mi * h(t + dt / 2) * (u + dt / 2 * k1);
    const Matrix k3 = mi * h(t + dt / 2) * (u + dt / 2 * k2);
    const Matrix k4 = mi * h(t + dt) * (u + dt * k3);
    u += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return u;
}

inline double spectral_norm(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

template <class F>
auto riemann_midpoint(F f, double a, double b, int n) {
  using R = std::decay_t<decltype(f(a))>;
  const double h = (b - a) / n;
  R acc = f(a + 0.5 * h);
  for (int k = 1; k < n; ++k) acc += f(a + (k + 0.5) * h);
  return R(acc * h);
}

}  // namespace oracle
