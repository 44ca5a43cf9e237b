#include "slowdrive/kato.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <type_traits>

#include "slowdrive/errors.hpp"
#include "slowdrive/parallel.hpp"
#include "slowdrive/quadrature.hpp"

namespace slowdrive {

namespace {

constexpr Index kCacheDim = 64;

// Unitary factor of the polar decomposition of m.
Matrix polar_unitary(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().adjoint();
}

double min_singular(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues().minCoeff();
}

std::array<double, 4> lagrange4(const double* x, double s) {
  std::array<double, 4> w{};
  for (int i = 0; i < 4; ++i) {
    double v = 1.0;
    for (int j = 0; j < 4; ++j)
      if (j != i) v *= (s - x[j]) / (x[i] - x[j]);
    w[static_cast<std::size_t>(i)] = v;
  }
  return w;
}

}  // namespace

std::vector<double> uniform_grid(double a, double b, std::size_t points) {
  if (points < 2 || !(b > a)) throw InvalidArgument("uniform_grid: need b > a and at least 2 points");
  std::vector<double> g(points);
  for (std::size_t k = 0; k < points; ++k) g[k] = a + (b - a) * static_cast<double>(k) / static_cast<double>(points - 1);
  g.back() = b;
  return g;
}

SpectralTrack::SpectralTrack(DrivenHamiltonian family, std::vector<double> s_grid, TrackOptions opt)
    : family_(std::move(family)), s_(std::move(s_grid)), opt_(opt) {
  if (!family_.at || family_.dim < 1) throw InvalidArgument("SpectralTrack: family is empty");
  if (s_.size() < 5) throw InvalidArgument("SpectralTrack: grid needs at least 5 points");
  h_ = (s_.back() - s_.front()) / static_cast<double>(s_.size() - 1);
  if (!(h_ > 0.0)) throw InvalidArgument("SpectralTrack: grid must increase");
  for (std::size_t k = 0; k + 1 < s_.size(); ++k)
    if (std::abs(s_[k + 1] - s_[k] - h_) > 1e-9 * h_) throw InvalidArgument("SpectralTrack: grid must be uniform");
  if (opt_.rank < 1 || opt_.target < 0 || opt_.target + opt_.rank > family_.dim)
    throw InvalidArgument("SpectralTrack: target/rank outside the spectrum");
  if (!(opt_.min_overlap > 0.0 && opt_.min_overlap <= 1.0))
    throw InvalidArgument("SpectralTrack: min_overlap must lie in (0, 1]");

  const std::size_t n = s_.size();
  lambda_.resize(n);
  v_.resize(n);
  std::vector<double> gaps(n, std::numeric_limits<double>::infinity());
  parallel_for(n, [&](std::size_t k) {
    const Eigensystem es = eigensystem(family_.at(s_[k]));
    lambda_[k] = es.values(opt_.target);
    v_[k] = target_vectors(es);
    const Index lo = opt_.target, hi = opt_.target + opt_.rank - 1;
    if (lo > 0) gaps[k] = std::min(gaps[k], es.values(lo) - es.values(lo - 1));
    if (hi + 1 < es.values.size()) gaps[k] = std::min(gaps[k], es.values(hi + 1) - es.values(hi));
  });
  for (std::size_t k = 0; k < n; ++k) {
    if (gaps[k] <= opt_.degeneracy_tolerance) {
      std::ostringstream os;
      os << "SpectralTrack: tracked eigenvalue is degenerate with a neighbour at s = " << s_[k] << " (gap " << gaps[k]
         << ")";
      throw MultiplicityError(os.str());
    }
    min_gap_ = std::min(min_gap_, gaps[k]);
  }
  for (std::size_t k = 1; k < n; ++k) {
    const Matrix m = v_[k].adjoint() * v_[k - 1];
    const double ov = min_singular(m);
    min_overlap_ = std::min(min_overlap_, ov);
    if (ov < opt_.min_overlap) {
      std::ostringstream os;
      os << "SpectralTrack: tracking lost between s = " << s_[k - 1] << " and " << s_[k] << " (overlap " << ov
         << " < " << opt_.min_overlap << "); refine the grid or check for a crossing";
      throw TrackingLoss(os.str());
    }
    v_[k] = v_[k] * polar_unitary(m);
  }
  if (family_.dim <= kCacheDim) {
    p_cache_.resize(n);
    dp_cache_.resize(n);
    for (std::size_t k = 0; k < n; ++k) p_cache_[k] = raw_projection(k);
    for (std::size_t k = 0; k < n; ++k) {
      int order = 0;
      bool one_sided = false;
      dp_cache_[k] = raw_derivative(k, &order, &one_sided);
    }
  }
}

Matrix SpectralTrack::target_vectors(const Eigensystem& es) const {
  return es.vectors.middleCols(opt_.target, opt_.rank);
}

Matrix SpectralTrack::raw_projection(std::size_t k) const { return v_[k] * v_[k].adjoint(); }

Matrix SpectralTrack::projection(std::size_t k) const {
  if (!p_cache_.empty()) return p_cache_.at(k);
  return raw_projection(k);
}

Matrix SpectralTrack::raw_derivative(std::size_t k, int* order, bool* one_sided) const {
  const std::size_t n = s_.size();
  auto p = [this](std::size_t i) { return projection(i); };
  *one_sided = false;
  if (k >= 2 && k + 2 < n) {
    const Matrix d1 = (p(k + 1) - p(k - 1)) / (2.0 * h_);
    const Matrix d2 = (p(k + 2) - p(k - 2)) / (4.0 * h_);
    *order = 4;
    return (4.0 * d1 - d2) / 3.0;
  }
  if (k >= 1 && k + 1 < n) {
    *order = 2;
    return (p(k + 1) - p(k - 1)) / (2.0 * h_);
  }
  *order = 2;
  *one_sided = true;
  if (k == 0) return (-3.0 * p(0) + 4.0 * p(1) - p(2)) / (2.0 * h_);
  return (3.0 * p(n - 1) - 4.0 * p(n - 2) + p(n - 3)) / (2.0 * h_);
}

DerivativeEstimate SpectralTrack::derivative(std::size_t k) const {
  if (k >= s_.size()) throw RangeError("SpectralTrack::derivative: index out of range");
  int order = 0;
  bool one_sided = false;
  Matrix d = raw_derivative(k, &order, &one_sided);
  if (!dp_cache_.empty()) d = dp_cache_[k];
  return {HermitianOperator::symmetrized(d), order, one_sided};
}

double SpectralTrack::finite_difference_error() const {
  double e = 0.0;
  for (std::size_t k = 2; k + 2 < s_.size(); ++k) {
    const Matrix d1 = (projection(k + 1) - projection(k - 1)) / (2.0 * h_);
    int order = 0;
    bool one_sided = false;
    const Matrix dr = dp_cache_.empty() ? raw_derivative(k, &order, &one_sided) : dp_cache_[k];
    e = std::max(e, operator_norm(dr - d1));
  }
  return e;
}

std::size_t SpectralTrack::locate(double s) const {
  const double slack = 1e-9 * h_;
  if (!(s >= s_.front() - slack && s <= s_.back() + slack)) {
    std::ostringstream os;
    os << "SpectralTrack: s = " << s << " outside [" << s_.front() << ", " << s_.back() << "]";
    throw RangeError(os.str());
  }
  const auto i = static_cast<std::ptrdiff_t>(std::floor((s - s_.front()) / h_));
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(s_.size()) - 2));
}

namespace {

template <class Get>
auto interpolate(const std::vector<double>& s, std::size_t i, double x, Get get) {
  const std::size_t i0 = std::min<std::size_t>(i > 0 ? i - 1 : 0, s.size() - 4);
  const auto w = lagrange4(&s[i0], x);
  std::decay_t<decltype(get(i0))> acc = get(i0) * w[0];
  for (std::size_t j = 1; j < 4; ++j) acc += get(i0 + j) * w[j];
  return acc;
}

}  // namespace

Matrix SpectralTrack::projection_at(double s) const {
  const std::size_t i = locate(s);
  return interpolate(s_, i, s, [this](std::size_t k) { return projection(k); });
}

Matrix SpectralTrack::derivative_at(double s) const {
  const std::size_t i = locate(s);
  return interpolate(s_, i, s, [this](std::size_t k) {
    if (!dp_cache_.empty()) return Matrix(dp_cache_[k]);
    int order = 0;
    bool one_sided = false;
    return raw_derivative(k, &order, &one_sided);
  });
}

Matrix SpectralTrack::derivative_times_projection(double s) const {
  const std::size_t i = locate(s);
  const Matrix d = derivative_at(s);
  const std::size_t i0 = std::min<std::size_t>(i > 0 ? i - 1 : 0, s_.size() - 4);
  const auto w = lagrange4(&s_[i0], s);
  Matrix acc = Matrix::Zero(d.rows(), d.cols());
  for (std::size_t j = 0; j < 4; ++j) acc.noalias() += w[j] * (d * v_[i0 + j]) * v_[i0 + j].adjoint();
  return acc;
}

double SpectralTrack::eigenvalue_at(double s) const {
  const std::size_t i = locate(s);
  return interpolate(s_, i, s, [this](std::size_t k) { return lambda_[k]; });
}

Matrix SpectralTrack::state_at(double s) const {
  const std::size_t i = locate(s);
  const std::size_t k = (s - s_[i] > 0.5 * h_) ? i + 1 : i;
  const Matrix v = target_vectors(eigensystem(family_.at(s)));
  return v * polar_unitary(v.adjoint() * v_[k]);
}

Matrix SpectralTrack::projection_exact(double s) const {
  const Matrix v = target_vectors(eigensystem(family_.at(s)));
  return v * v.adjoint();
}

SpectralSplit SpectralTrack::split(std::size_t k) const {
  const Eigensystem es = eigensystem(family_.at(s_.at(k)));
  const Index d = family_.dim;
  SpectralSplit out;
  out.target = Matrix::Zero(d, d);
  out.continuum = Matrix::Zero(d, d);
  for (Index j = 0; j < d; ++j) {
    const Matrix pj = es.vectors.col(j) * es.vectors.col(j).adjoint();
    if (j >= opt_.target && j < opt_.target + opt_.rank) {
      out.target += pj;
    } else if (es.values(j) >= opt_.continuum_threshold) {
      out.continuum += pj;
    } else {
      out.bound.push_back(pj);
    }
  }
  return out;
}

SpectralTrack SpectralTrack::regauged(std::uint64_t seed) const {
  SpectralTrack t = *this;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (auto& v : t.v_)
    for (Index c = 0; c < v.cols(); ++c) v.col(c) *= std::exp(Complex(0.0, phase(rng)));
  return t;
}

SpectralTrack tracked_spectral_projection(const DrivenHamiltonian& family, std::vector<double> s_grid,
                                          const TrackOptions& opt) {
  return SpectralTrack(family, std::move(s_grid), opt);
}

DerivativeEstimate projection_derivative(const SpectralTrack& track, double s) {
  const auto& g = track.grid();
  const double h = track.spacing();
  const double pos = (s - g.front()) / h;
  const double r = std::round(pos);
  if (std::abs(pos - r) < 1e-9 && r >= 0.0 && r <= static_cast<double>(g.size() - 1))
    return track.derivative(static_cast<std::size_t>(r));
  const Matrix d = track.derivative_at(s);
  const std::size_t i = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0, static_cast<double>(g.size() - 2)));
  // Order of the weakest grid estimate used by the interpolant.
  const std::size_t i0 = std::min<std::size_t>(i > 0 ? i - 1 : 0, g.size() - 4);
  DerivativeEstimate out{HermitianOperator::symmetrized(d), 4, false};
  for (std::size_t k = i0; k < i0 + 4; ++k) {
    const auto e = track.derivative(k);
    out.order = std::min(out.order, e.order);
    out.one_sided = out.one_sided || e.one_sided;
  }
  return out;
}

Generator driven_generator(const SpectralTrack& track, double eps, bool subtract_eigenvalue) {
  const SpectralTrack* tr = &track;
  return [tr, eps, subtract_eigenvalue](double t) {
    const double s = eps * t;
    HermitianOperator h = tr->family().at(s);
    if (subtract_eigenvalue) h = h - HermitianOperator::identity(h.dim()) * tr->eigenvalue_at(s);
    return h;
  };
}

Generator kato_generator(const SpectralTrack& track, double eps, bool subtract_eigenvalue) {
  const SpectralTrack* tr = &track;
  return [tr, eps, subtract_eigenvalue](double t) {
    const double s = eps * t;
    Matrix k = tr->family().at(s).matrix();
    if (eps != 0.0) {
      const Matrix dp = tr->derivative_times_projection(s);
      k += Complex(0.0, eps) * (dp - dp.adjoint());
    }
    if (subtract_eigenvalue) k -= tr->eigenvalue_at(s) * Matrix::Identity(k.rows(), k.cols());
    return HermitianOperator::symmetrized(k);
  };
}

namespace {

void check_horizon(double eps, double t) {
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw InvalidArgument("eps must be finite and >= 0");
  if (!(t >= 0.0)) throw RangeError("t must be >= 0");
  if (eps > 0.0 && eps * t > 1.0 + 1e-12) throw RangeError("t must not exceed 1/eps");
}

}  // namespace

KatoPropagation kato_propagate(const SpectralTrack& track, double eps, double t, const IntegratorConfig& cfg) {
  check_horizon(eps, t);
  const auto r = time_ordered_exp_detailed(kato_generator(track, eps), 0.0, t, cfg);
  KatoPropagation out{r.u, 0.0, 0.0, true, r.steps};
  const Matrix& u = r.u.matrix();
  out.intertwining_defect = operator_norm(track.projection_exact(eps * t) * u - u * track.projection_exact(0.0));
  out.budget = 10.0 * (cfg.tolerance + 2.0 * eps * t * track.finite_difference_error());
  out.within_budget = out.intertwining_defect <= out.budget;
  return out;
}

KatoRun adiabatic_error(const SpectralTrack& track, double eps, std::span<const double> t_grid,
                        const IntegratorConfig& cfg, const AdiabaticOptions& opt) {
  cfg.validate();
  std::vector<double> ts(t_grid.begin(), t_grid.end());
  std::sort(ts.begin(), ts.end());
  for (double t : ts) check_horizon(eps, t);
  const Generator h = driven_generator(track, eps, opt.subtract_eigenvalue);
  const Generator k = kato_generator(track, eps, opt.subtract_eigenvalue);
  KatoRun run;
  run.eps = eps;
  const Matrix x0 = track.state_at(0.0);
  Matrix x = x0, xk = x0;
  const Index r = x0.cols();
  double prev = 0.0;
  for (double t : ts) {
    if (t > prev) {
      auto a = propagate_block(h, prev, t, x, cfg);
      auto b = propagate_block(k, prev, t, xk, cfg);
      x = std::move(a.block);
      xk = std::move(b.block);
      run.steps += a.steps + b.steps;
    }
    prev = t;
    const Matrix vs = track.state_at(eps * t);
    const Matrix ov = vs.adjoint() * x;
    run.t.push_back(t);
    run.fidelity.push_back(r == 1 ? std::abs(ov(0, 0)) : min_singular(ov));
    run.theta.push_back(r == 1 ? std::arg(ov(0, 0)) : 0.0);
    run.defect.push_back(operator_norm(xk - x));
    run.intertwining.push_back(operator_norm(xk - vs * (vs.adjoint() * xk)));
    const Matrix id = Matrix::Identity(r, r);
    run.isometry_defect = std::max({run.isometry_defect, (x.adjoint() * x - id).norm(), (xk.adjoint() * xk - id).norm()});
    run.image.push_back(x);
    run.kato_image.push_back(xk);
  }
  const double tmax = ts.empty() ? 0.0 : ts.back();
  run.budget = 10.0 * (cfg.tolerance + 2.0 * eps * tmax * track.finite_difference_error());
  return run;
}

IntegrationByParts integration_by_parts_bound(const OperatorFunction& A, const OperatorFunction& B, double eps,
                                              std::size_t intervals, const OperatorFunction& dB) {
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("integration_by_parts_bound: eps must lie in (0, 1)");
  if (intervals < 2) throw InvalidArgument("integration_by_parts_bound: need at least 2 intervals");
  const double T = 1.0 / eps;
  const double split = 1.0 / std::sqrt(eps);
  const double tau = T / static_cast<double>(intervals);
  auto db = [&](double t) -> Matrix {
    if (dB) return dB(t);
    const double d = 1e-4;
    return (B(t + d) - B(t - d)) / (2.0 * d);
  };
  // F(1/√ε) first, by the same trapezoid rule plus a linear tail.
  const auto ks = static_cast<std::size_t>(std::floor(split / tau));
  Matrix fsplit;
  {
    Matrix prev = A(0.0);
    fsplit = Matrix::Zero(prev.rows(), prev.cols());
    for (std::size_t k = 1; k <= ks; ++k) {
      Matrix cur = A(static_cast<double>(k) * tau);
      fsplit += 0.5 * tau * (prev + cur);
      prev = std::move(cur);
    }
    const double rem = split - static_cast<double>(ks) * tau;
    if (rem > 0.0) {
      const Matrix end = A(split);
      fsplit += 0.5 * rem * (prev + end);
    }
  }
  IntegrationByParts out;
  Matrix a_prev = A(0.0);
  Matrix ab_prev = a_prev * B(0.0);
  Matrix F = Matrix::Zero(a_prev.rows(), a_prev.cols());
  Matrix lhs = Matrix::Zero(ab_prev.rows(), ab_prev.cols());
  double dbn_prev = operator_norm(db(0.0));
  double tail_prev = operator_norm(F - fsplit) * dbn_prev;
  double head = 0.0, tail = 0.0;
  out.max_derivative = dbn_prev;
  Matrix b_last;
  for (std::size_t k = 1; k <= intervals; ++k) {
    const double t = static_cast<double>(k) * tau;
    Matrix a = A(t);
    Matrix b = B(t);
    Matrix ab = a * b;
    F += 0.5 * tau * (a_prev + a);
    lhs += 0.5 * tau * (ab_prev + ab);
    const double dbn = operator_norm(db(t));
    out.max_derivative = std::max(out.max_derivative, dbn);
    head += 0.5 * tau * (dbn_prev + dbn);
    const double tl = operator_norm(F - fsplit) * dbn;
    tail += 0.5 * tau * (tail_prev + tl);
    a_prev = std::move(a);
    ab_prev = std::move(ab);
    dbn_prev = dbn;
    tail_prev = tl;
    if (k == intervals) b_last = std::move(b);
  }
  out.lhs = eps * operator_norm(lhs);
  out.mean_integral = eps * operator_norm(F);
  out.boundary = out.mean_integral * operator_norm(b_last);
  out.head = eps * operator_norm(fsplit) * head;
  out.tail = eps * tail;
  out.budget = out.boundary + out.head + out.tail;
  return out;
}

namespace {

// F(t) = ∫₀ᵗ e^{iHs}Ae^{-iHs}ds in closed form.
struct HeisenbergIntegral {
  Eigensystem es;
  Matrix a;  // A in the eigenbasis

  HeisenbergIntegral(const HermitianOperator& h, const HermitianOperator& A)
      : es(eigensystem(h)), a(es.vectors.adjoint() * A.matrix() * es.vectors) {}

  Matrix operator()(double t) const {
    const Index n = a.rows();
    Matrix f(n, n);
    for (Index m = 0; m < n; ++m)
      for (Index k = 0; k < n; ++k) {
        const double w = es.values(m) - es.values(k);
        const Complex g = std::abs(w * t) < 1e-8 ? Complex(t, 0.5 * w * t * t)
                                                 : (std::exp(Complex(0.0, w * t)) - 1.0) / Complex(0.0, w);
        f(m, k) = a(m, k) * g;
      }
    return es.vectors * f * es.vectors.adjoint();
  }
};

}  // namespace

PerturbedAverage perturbed_time_average(const HermitianOperator& H1, const HermitianOperator& H2,
                                        const HermitianOperator& A, double T, std::size_t samples) {
  if (H1.dim() != H2.dim() || H1.dim() != A.dim()) throw DomainMismatch("perturbed_time_average: dimensions differ");
  if (!(T > 0.0)) throw InvalidArgument("perturbed_time_average: T must be > 0");
  if (samples < 2) throw InvalidArgument("perturbed_time_average: samples must be >= 2");
  const HeisenbergIntegral f1(H1, A), f2(H2, A);
  PerturbedAverage out;
  const Matrix F1 = f1(T), F2 = f2(T);
  out.delta = operator_norm(H1.matrix() - H2.matrix());
  out.d = operator_norm(F1 - F2) / T;
  out.average1 = operator_norm(F1) / T;
  out.average2 = operator_norm(F2) / T;
  double i1 = 0.0, i2 = 0.0;
  double p1 = 0.0, p2 = 0.0;
  const double dt = T / static_cast<double>(samples - 1);
  for (std::size_t k = 1; k < samples; ++k) {
    const double t = dt * static_cast<double>(k);
    const double n1 = operator_norm(f1(t)), n2 = operator_norm(f2(t));
    i1 += 0.5 * dt * (p1 + n1);
    i2 += 0.5 * dt * (p2 + n2);
    p1 = n1;
    p2 = n2;
  }
  out.budget = out.delta * (operator_norm(F1) + i1 / T + operator_norm(F2) + i2 / T);
  return out;
}

double hbar_taylor_check(const DrivenHamiltonian& family, double eps, std::int64_t j) {
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("hbar_taylor_check: eps must lie in (0, 1)");
  if (j < 0) throw RangeError("hbar_taylor_check: j must be >= 0");
  const double w = std::sqrt(eps);
  const double y = w * static_cast<double>(j);
  const auto q = integrate([&family](double s) { return family.at(s).matrix(); }, y, y + w);
  const Matrix hbar = q.integral / w;
  return operator_norm(hbar - family.at(y).matrix() - 0.5 * w * family.derivative(y).matrix());
}

}  // namespace slowdrive
