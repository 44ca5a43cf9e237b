#include "slowdrive/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>

#include "slowdrive/errors.hpp"

namespace slowdrive {

const GaussRule& gauss_legendre(int order) {
  static std::mutex mu;
  static std::map<int, GaussRule> cache;
  if (order < 1) throw InvalidArgument("gauss_legendre: order must be >= 1");
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(order);
  if (it != cache.end()) return it->second;
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    j(k - 1, k) = j(k, k - 1) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  GaussRule r;
  for (int k = 0; k < order; ++k) {
    r.nodes.push_back(es.eigenvalues()(k));
    const double v = es.eigenvectors()(0, k);
    r.weights.push_back(2.0 * v * v);
  }
  return cache.emplace(order, std::move(r)).first->second;
}

namespace {

Matrix panel_sum(const std::function<Matrix(double)>& f, double a, double b, int panels, const GaussRule& r) {
  const double h = (b - a) / panels;
  Matrix acc;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + p * h;
    const double c = lo + 0.5 * h;
    for (std::size_t k = 0; k < r.nodes.size(); ++k) {
      Matrix v = f(c + 0.5 * h * r.nodes[k]) * (0.5 * h * r.weights[k]);
      if (acc.size() == 0) {
        acc = std::move(v);
      } else {
        acc += v;
      }
    }
  }
  return acc;
}

}  // namespace

QuadratureResult integrate(const std::function<Matrix(double)>& f, double a, double b,
                           std::span<const double> splits, double tol, int max_panels) {
  if (!(b > a)) throw InvalidArgument("integrate: requires b > a");
  std::vector<double> pts{a};
  for (double s : splits)
    if (s > a && s < b) pts.push_back(s);
  std::sort(pts.begin() + 1, pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  pts.push_back(b);
  const GaussRule& g8 = gauss_legendre(8);
  const GaussRule& g7 = gauss_legendre(7);
  QuadratureResult out;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double lo = pts[i], hi = pts[i + 1];
    if (hi <= lo) continue;
    const double share = (hi - lo) / (b - a);
    int panels = 1;
    for (;;) {
      Matrix i8 = panel_sum(f, lo, hi, panels, g8);
      const Matrix i7 = panel_sum(f, lo, hi, panels, g7);
      const double gap = (i8 - i7).norm() / (b - a);
      if (gap <= tol * share) {
        if (out.integral.size() == 0) {
          out.integral = std::move(i8);
        } else {
          out.integral += i8;
        }
        out.gap += gap;
        out.panels += panels;
        break;
      }
      panels *= 2;
      if (panels > max_panels) {
        std::ostringstream os;
        os << "quadrature non-convergence on [" << lo << ", " << hi << "]: order-8 and order-7 rules differ by "
           << gap << " (mean-normalized) after " << max_panels << " panels";
        throw NumericalError(os.str());
      }
    }
  }
  return out;
}

}  // namespace slowdrive
