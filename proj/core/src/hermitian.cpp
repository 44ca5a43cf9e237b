#include "slowdrive/hermitian.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>

#include "slowdrive/errors.hpp"

namespace slowdrive {

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

void require_square(const Matrix& m, const char* what) {
  if (m.rows() == 0 || m.rows() != m.cols()) {
    std::ostringstream os;
    os << what << ": expected a nonempty square matrix, got " << m.rows() << "x" << m.cols();
    throw InvalidOperator(os.str());
  }
}

Eigen::Matrix2cd pauli_exp2(double a, double bx, double by, double bz) {
  const double nb = std::sqrt(bx * bx + by * by + bz * bz);
  const Complex i1(0.0, 1.0);
  auto f = [&](double x) { return std::exp(-i1 * x); };
  Complex alpha;
  Complex scale;  // β⃗ = scale · b⃗
  if (nb == 0.0) {
    alpha = f(a);
    scale = 0.0;
  } else if (nb < 1e-8) {
    alpha = 0.5 * (f(a + nb) + f(a - nb));
    scale = -i1 * f(a);
  } else {
    alpha = 0.5 * (f(a + nb) + f(a - nb));
    scale = (f(a + nb) - f(a - nb)) / (2.0 * nb);
  }
  Eigen::Matrix2cd u;
  u(0, 0) = alpha + scale * bz;
  u(1, 1) = alpha - scale * bz;
  u(0, 1) = scale * Complex(bx, -by);
  u(1, 0) = scale * Complex(bx, by);
  return u;
}

Eigen::Matrix2cd step2(const Matrix& h, double dt) {
  const double a = 0.5 * (h(0, 0).real() + h(1, 1).real());
  const double bz = 0.5 * (h(0, 0).real() - h(1, 1).real());
  const Complex off = 0.5 * (h(1, 0) + std::conj(h(0, 1)));
  return pauli_exp2(a * dt, off.real() * dt, off.imag() * dt, bz * dt);
}

Matrix dense_expm(const Matrix& h, double dt) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  if (es.info() != Eigen::Success) {
    std::ostringstream os;
    os << "eigensolver failed (dim " << h.rows() << ", norm " << h.norm() << ")";
    throw NumericalError(os.str());
  }
  const Vector phases = (es.eigenvalues().cast<Complex>() * Complex(0.0, -dt)).array().exp();
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

std::vector<double> step_boundaries(double t0, double t1, std::span<const double> breakpoints) {
  std::vector<double> pts{t0};
  std::vector<double> inner;
  for (double b : breakpoints) {
    if (b > t0 && b < t1) inner.push_back(b);
  }
  std::sort(inner.begin(), inner.end());
  inner.erase(std::unique(inner.begin(), inner.end()), inner.end());
  pts.insert(pts.end(), inner.begin(), inner.end());
  pts.push_back(t1);
  return pts;
}

struct HalvingResult {
  Matrix x;
  std::int64_t steps;
  double defect;
};

// Runs `step(x, t_mid, h)` passes with doubling step counts until two
// successive passes agree to cfg.tolerance in Frobenius norm.
template <class Step>
HalvingResult halving(double t0, double t1, std::span<const double> breakpoints,
                      const IntegratorConfig& cfg, const Matrix& x0, Step&& step) {
  cfg.validate();
  if (!(t1 >= t0)) throw RangeError("time-ordered propagation requires t1 >= t0");
  if (t1 == t0) return {x0, 0, 0.0};
  const auto pts = step_boundaries(t0, t1, breakpoints);
  std::vector<std::int64_t> base;
  std::int64_t total = 0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const auto n = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil((pts[i + 1] - pts[i]) / cfg.step - 1e-9)));
    base.push_back(n);
    total += n;
  }
  Matrix prev;
  double defect = std::numeric_limits<double>::infinity();
  for (int pass = 0;; ++pass) {
    const std::int64_t mult = std::int64_t{1} << pass;
    if (total * mult > cfg.max_steps) {
      std::ostringstream os;
      os << "step halving exceeded max_steps=" << cfg.max_steps << " on [" << t0 << ", " << t1
         << "]; last refinement defect " << defect << " vs tolerance " << cfg.tolerance;
      throw ConvergenceFailure(os.str(), defect);
    }
    Matrix x = x0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      const std::int64_t n = base[i] * mult;
      const double h = (pts[i + 1] - pts[i]) / static_cast<double>(n);
      for (std::int64_t k = 0; k < n; ++k) {
        step(x, pts[i] + (static_cast<double>(k) + 0.5) * h, h);
      }
    }
    if (!all_finite(x)) throw NumericalError("non-finite values during time-ordered propagation");
    if (pass > 0) {
      defect = (x - prev).norm();
      if (defect <= cfg.tolerance) return {std::move(x), total * mult, defect};
    }
    prev = std::move(x);
  }
}

double norm1(const SparseMatrix& h) {
  double best = 0.0;
  for (Index k = 0; k < h.outerSize(); ++k) {
    double s = 0.0;
    for (SparseMatrix::InnerIterator it(h, k); it; ++it) s += std::abs(it.value());
    best = std::max(best, s);
  }
  return best;
}

double norm1(const Matrix& h) { return h.cwiseAbs().colwise().sum().maxCoeff(); }

template <class Op>
Matrix taylor_apply(const Op& h, double dt, const Matrix& x) {
  const double theta = std::abs(dt) * norm1(h);
  const int sub = std::max(1, static_cast<int>(std::ceil(theta)));
  const Complex c(0.0, -dt / sub);
  Matrix y = x;
  for (int s = 0; s < sub; ++s) {
    Matrix term = y;
    Matrix acc = y;
    const double ref = std::max(acc.norm(), 1e-300);
    for (int k = 1; k <= 60; ++k) {
      term = (h * term) * (c / static_cast<double>(k));
      acc += term;
      if (term.norm() <= 1e-17 * ref) break;
    }
    y = std::move(acc);
  }
  return y;
}

}  // namespace

HermitianOperator::HermitianOperator(const Matrix& entries, double tolerance) {
  require_square(entries, "HermitianOperator");
  if (!all_finite(entries)) throw InvalidOperator("HermitianOperator: non-finite entries");
  const double dev = (entries - entries.adjoint()).cwiseAbs().maxCoeff();
  if (dev > tolerance) {
    std::ostringstream os;
    os << "HermitianOperator: entrywise deviation from adjoint " << dev << " exceeds " << tolerance;
    throw InvalidOperator(os.str());
  }
  m_ = 0.5 * (entries + entries.adjoint());
}

HermitianOperator HermitianOperator::zero(Index dim) {
  if (dim <= 0) throw InvalidOperator("HermitianOperator: dim must be positive");
  return HermitianOperator(Matrix::Zero(dim, dim), Trusted{});
}

HermitianOperator HermitianOperator::identity(Index dim) {
  if (dim <= 0) throw InvalidOperator("HermitianOperator: dim must be positive");
  return HermitianOperator(Matrix::Identity(dim, dim), Trusted{});
}

HermitianOperator HermitianOperator::diagonal(const RealVector& d) {
  if (d.size() == 0) throw InvalidOperator("HermitianOperator: dim must be positive");
  if (!d.allFinite()) throw InvalidOperator("HermitianOperator: non-finite entries");
  Matrix m = Matrix::Zero(d.size(), d.size());
  m.diagonal() = d.cast<Complex>();
  return HermitianOperator(std::move(m), Trusted{});
}

HermitianOperator HermitianOperator::symmetrized(const Matrix& m) {
  require_square(m, "HermitianOperator");
  if (!all_finite(m)) throw InvalidOperator("HermitianOperator: non-finite entries");
  return HermitianOperator(0.5 * (m + m.adjoint()), Trusted{});
}

HermitianOperator HermitianOperator::operator+(const HermitianOperator& o) const {
  return HermitianOperator(m_ + o.m_, Trusted{});
}

HermitianOperator HermitianOperator::operator-(const HermitianOperator& o) const {
  return HermitianOperator(m_ - o.m_, Trusted{});
}

HermitianOperator HermitianOperator::operator*(double s) const {
  return HermitianOperator(m_ * s, Trusted{});
}

HermitianOperator& HermitianOperator::operator+=(const HermitianOperator& o) {
  m_ += o.m_;
  return *this;
}

HermitianOperator HermitianOperator::conjugated(const Matrix& u) const {
  const Matrix c = u.adjoint() * m_ * u;
  return HermitianOperator(0.5 * (c + c.adjoint()), Trusted{});
}

UnitaryMatrix::UnitaryMatrix(Matrix entries, double tolerance) {
  require_square(entries, "UnitaryMatrix");
  if (!all_finite(entries)) throw InvalidOperator("UnitaryMatrix: non-finite entries");
  const double d = unitarity_defect(entries);
  if (d > tolerance) {
    std::ostringstream os;
    os << "UnitaryMatrix: unitarity defect " << d << " exceeds " << tolerance;
    throw InvalidOperator(os.str());
  }
  m_ = std::move(entries);
}

UnitaryMatrix UnitaryMatrix::identity(Index dim) {
  if (dim <= 0) throw InvalidOperator("UnitaryMatrix: dim must be positive");
  return UnitaryMatrix(Matrix::Identity(dim, dim), Trusted{});
}

UnitaryMatrix UnitaryMatrix::assume_unitary(Matrix entries) {
  require_square(entries, "UnitaryMatrix");
  return UnitaryMatrix(std::move(entries), Trusted{});
}

UnitaryMatrix UnitaryMatrix::adjoint() const { return UnitaryMatrix(m_.adjoint(), Trusted{}); }

UnitaryMatrix UnitaryMatrix::operator*(const UnitaryMatrix& o) const {
  if (o.dim() != dim()) throw InvalidArgument("UnitaryMatrix product: dimension mismatch");
  return UnitaryMatrix(m_ * o.m_, Trusted{});
}

StateVector::StateVector(Vector amplitudes, double tolerance) {
  if (amplitudes.size() == 0) throw InvalidArgument("StateVector: empty");
  if (!amplitudes.allFinite()) throw InvalidArgument("StateVector: non-finite amplitudes");
  const double n = amplitudes.norm();
  if (std::abs(n - 1.0) > tolerance) {
    std::ostringstream os;
    os << "StateVector: norm " << n << " differs from 1 by more than " << tolerance;
    throw InvalidArgument(os.str());
  }
  v_ = std::move(amplitudes);
}

StateVector StateVector::normalized(const Vector& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw InvalidArgument("StateVector: cannot normalize");
  return StateVector(v / n);
}

StateVector StateVector::basis(Index dim, Index k) {
  if (k < 0 || k >= dim) throw RangeError("StateVector::basis: index out of range");
  Vector v = Vector::Zero(dim);
  v(k) = 1.0;
  return StateVector(std::move(v));
}

StateVector operator*(const UnitaryMatrix& u, const StateVector& psi) {
  if (u.dim() != psi.dim()) throw InvalidArgument("unitary/state dimension mismatch");
  Vector v = u.matrix() * psi.amplitudes();
  return StateVector(std::move(v), 1e-9);
}

const Matrix& pauli(int k) {
  static const std::array<Matrix, 4> mats = [] {
    std::array<Matrix, 4> m;
    const Complex i1(0.0, 1.0);
    m[0] = Matrix::Identity(2, 2);
    m[1] = Matrix(2, 2);
    m[1] << 0.0, 1.0, 1.0, 0.0;
    m[2] = Matrix(2, 2);
    m[2] << 0.0, -i1, i1, 0.0;
    m[3] = Matrix(2, 2);
    m[3] << 1.0, 0.0, 0.0, -1.0;
    return m;
  }();
  if (k < 0 || k > 3) throw RangeError("pauli: index must be 0..3");
  return mats[static_cast<std::size_t>(k)];
}

HermitianOperator PauliVector::to_operator() const {
  Matrix m = a * pauli(0) + b[0] * pauli(1) + b[1] * pauli(2) + b[2] * pauli(3);
  return HermitianOperator(m);
}

PauliVector PauliVector::from_operator(const HermitianOperator& h) {
  if (h.dim() != 2) throw InvalidArgument("PauliVector: operator must be 2x2");
  const Matrix& m = h.matrix();
  PauliVector p;
  p.a = 0.5 * (m(0, 0).real() + m(1, 1).real());
  p.b = {m(1, 0).real(), m(1, 0).imag(), 0.5 * (m(0, 0).real() - m(1, 1).real())};
  return p;
}

void IntegratorConfig::validate() const {
  std::ostringstream os;
  if (!(step > 0.0) || !std::isfinite(step)) os << " step must be > 0;";
  if (!(tolerance > 0.0) || !std::isfinite(tolerance)) os << " tolerance must be > 0;";
  if (max_steps <= 0) os << " max_steps must be positive;";
  if (!os.str().empty()) throw ValidationError("IntegratorConfig:" + os.str());
}

Eigensystem eigensystem(const HermitianOperator& h) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(h.matrix());
  if (es.info() != Eigen::Success) {
    std::ostringstream os;
    os << "eigensolver failed (dim " << h.dim() << ", Frobenius norm " << h.matrix().norm() << ")";
    throw NumericalError(os.str());
  }
  return {es.eigenvalues(), es.eigenvectors()};
}

UnitaryMatrix expm_hermitian(const HermitianOperator& h, double t) {
  if (!std::isfinite(t)) throw InvalidArgument("expm_hermitian: non-finite time");
  return UnitaryMatrix::assume_unitary(dense_expm(h.matrix(), t));
}

UnitaryMatrix pauli_exp(double a, const std::array<double, 3>& b) {
  if (!std::isfinite(a) || !std::isfinite(b[0]) || !std::isfinite(b[1]) || !std::isfinite(b[2])) {
    throw InvalidArgument("pauli_exp: non-finite input");
  }
  return UnitaryMatrix::assume_unitary(Matrix(pauli_exp2(a, b[0], b[1], b[2])));
}

OrderedExp time_ordered_exp_detailed(const Generator& gen, double t0, double t1,
                                     const IntegratorConfig& cfg,
                                     std::span<const double> breakpoints) {
  const Index dim = gen(t0).dim();
  auto step = [&](Matrix& u, double tm, double h) {
    const HermitianOperator g = gen(tm);
    if (g.dim() != dim) throw InvalidArgument("generator changed dimension");
    if (dim == 2) {
      const Eigen::Matrix2cd e = step2(g.matrix(), h);
      u = e * u;
    } else {
      u = dense_expm(g.matrix(), h) * u;
    }
  };
  auto r = halving(t0, t1, breakpoints, cfg, Matrix::Identity(dim, dim), step);
  return {UnitaryMatrix::assume_unitary(std::move(r.x)), r.steps, r.defect};
}

UnitaryMatrix time_ordered_exp(const Generator& gen, double t0, double t1,
                               const IntegratorConfig& cfg, std::span<const double> breakpoints) {
  return time_ordered_exp_detailed(gen, t0, t1, cfg, breakpoints).u;
}

OrderedExp time_ordered_exp_magnus4(const Generator& gen, double t0, double t1,
                                    const IntegratorConfig& cfg,
                                    std::span<const double> breakpoints) {
  const Index dim = gen(t0).dim();
  const double c = std::sqrt(3.0) / 6.0;
  const Complex w(0.0, -std::sqrt(3.0) / 12.0);
  auto step = [&](Matrix& u, double tm, double h) {
    const Matrix h1 = gen(tm - c * h).matrix();
    const Matrix h2 = gen(tm + c * h).matrix();
    Matrix k = (0.5 * h) * (h1 + h2) + (w * h * h) * (h2 * h1 - h1 * h2);
    k = 0.5 * (k + k.adjoint());
    if (dim == 2) {
      u = step2(k, 1.0) * u;
    } else {
      u = dense_expm(k, 1.0) * u;
    }
  };
  auto r = halving(t0, t1, breakpoints, cfg, Matrix::Identity(dim, dim), step);
  return {UnitaryMatrix::assume_unitary(std::move(r.x)), r.steps, r.defect};
}

namespace {

class ConjugationCache {
 public:
  ConjugationCache(Generator a, const IntegratorConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    neg_a_ = [a = std::move(a)](double t) { return a(t) * -1.0; };
    delta_ = cfg.step;
    seg_cfg_ = cfg;
    seg_cfg_.step = delta_;
    seg_cfg_.tolerance = std::max(cfg.tolerance * delta_ / 10.0, 1e-13);
    tail_cfg_ = seg_cfg_;
    tail_cfg_.tolerance = std::max(cfg.tolerance / 100.0, 1e-13);
  }

  Matrix at(double t) {
    if (!(t >= 0.0)) throw RangeError("merged generator queried at negative time");
    std::lock_guard<std::mutex> lock(mu_);
    const auto k = static_cast<std::size_t>(std::floor(t / delta_));
    if (checkpoints_.empty()) {
      checkpoints_.push_back(Matrix::Identity(neg_a_(0.0).dim(), neg_a_(0.0).dim()));
    }
    while (checkpoints_.size() <= k) {
      const double s0 = static_cast<double>(checkpoints_.size() - 1) * delta_;
      const Matrix step = time_ordered_exp_magnus4(neg_a_, s0, s0 + delta_, seg_cfg_).u.matrix();
      checkpoints_.push_back(step * checkpoints_.back());
    }
    const double tk = static_cast<double>(k) * delta_;
    if (t == tk) return checkpoints_[k];
    return time_ordered_exp_magnus4(neg_a_, tk, t, tail_cfg_).u.matrix() * checkpoints_[k];
  }

 private:
  IntegratorConfig cfg_, seg_cfg_, tail_cfg_;
  Generator neg_a_;
  double delta_ = 0.0;
  std::mutex mu_;
  std::vector<Matrix> checkpoints_;
};

}  // namespace

Generator merge_generators(Generator a, Generator b, const IntegratorConfig& cfg) {
  auto cache = std::make_shared<ConjugationCache>(a, cfg);
  return [a = std::move(a), b = std::move(b), cache](double t) {
    const Matrix w = cache->at(t);
    const Matrix c = a(t).matrix() + w * b(t).matrix() * w.adjoint();
    return HermitianOperator::symmetrized(c);
  };
}

double unitarity_defect(const Matrix& u) {
  if (u.rows() != u.cols()) throw InvalidArgument("unitarity_defect: square matrix required");
  return (u.adjoint() * u - Matrix::Identity(u.rows(), u.cols())).norm();
}

double frobenius_norm(const Matrix& m) { return m.norm(); }

double operator_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() == m.cols() && (m - m.adjoint()).cwiseAbs().maxCoeff() <= 1e-13 * (1.0 + m.cwiseAbs().maxCoeff())) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

double operator_norm_power(const Matrix& m, int max_iterations, double tolerance) {
  if (m.size() == 0) return 0.0;
  Vector x(m.cols());
  for (Index i = 0; i < x.size(); ++i) x(i) = Complex(1.0 + 0.01 * static_cast<double>(i % 7), 0.001 * static_cast<double>(i % 5));
  x.normalize();
  double sigma = 0.0;
  for (int it = 0; it < max_iterations; ++it) {
    Vector y = m.adjoint() * (m * x);
    const double ny = y.norm();
    if (ny == 0.0) return 0.0;
    const double next = std::sqrt(ny);
    x = y / ny;
    if (it > 0 && std::abs(next - sigma) <= tolerance * next) {
      sigma = next;
      break;
    }
    sigma = next;
  }
  return sigma;
}

Matrix expm_apply(const SparseMatrix& h, double dt, const Matrix& x) { return taylor_apply(h, dt, x); }

Matrix expm_apply(const Matrix& h, double dt, const Matrix& x) { return taylor_apply(h, dt, x); }

BlockPropagation propagate_block(const SparseGenerator& gen, double t0, double t1, const Matrix& x,
                                 const IntegratorConfig& cfg, std::span<const double> breakpoints) {
  auto step = [&](Matrix& y, double tm, double h) {
    const SparseMatrix g = gen(tm);
    y = taylor_apply(g, h, y);
  };
  auto r = halving(t0, t1, breakpoints, cfg, x, step);
  return {std::move(r.x), r.steps, r.defect};
}

BlockPropagation propagate_block(const Generator& gen, double t0, double t1, const Matrix& x,
                                 const IntegratorConfig& cfg, std::span<const double> breakpoints) {
  auto step = [&](Matrix& y, double tm, double h) {
    const HermitianOperator g = gen(tm);
    if (g.dim() == 2) {
      y = step2(g.matrix(), h) * y;
    } else {
      y = taylor_apply(g.matrix(), h, y);
    }
  };
  auto r = halving(t0, t1, breakpoints, cfg, x, step);
  return {std::move(r.x), r.steps, r.defect};
}

}  // namespace slowdrive
