#include "slowdrive/averaging.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "slowdrive/errors.hpp"
#include "slowdrive/parallel.hpp"
#include "slowdrive/quadrature.hpp"

namespace slowdrive {

AveragingSchedule AveragingSchedule::from_eps(double eps, double horizon) {
  AveragingSchedule s;
  s.eps = eps;
  s.horizon = horizon;
  s.beta = std::sqrt(eps);
  if (eps > 0.0) {
    s.t0_outer = 1.0 / s.beta;
    s.t0_inner = 1.0 / std::sqrt(s.beta);
  } else {
    // Frozen drive: one window covering the horizon.
    s.t0_outer = horizon;
    s.t0_inner = horizon;
  }
  s.validate();
  return s;
}

void AveragingSchedule::validate() const {
  std::ostringstream os;
  if (!(eps >= 0.0 && eps < 1.0)) os << " eps must lie in [0, 1);";
  if (!(horizon > 0.0) || !std::isfinite(horizon)) os << " horizon must be > 0;";
  if (!(t0_outer > 0.0) || !(t0_inner > 0.0)) os << " window lengths must be > 0;";
  if (std::abs(beta * beta - eps) > 1e-12) os << " beta^2 must equal eps;";
  if (!os.str().empty()) throw ValidationError("AveragingSchedule:" + os.str());
}

std::vector<double> uniform_breakpoints(double horizon, double length) {
  if (!(horizon > 0.0) || !(length > 0.0)) throw InvalidArgument("uniform_breakpoints: horizon and length must be > 0");
  std::vector<double> bp{0.0};
  for (std::int64_t k = 1;; ++k) {
    const double b = static_cast<double>(k) * length;
    // Drop slivers that are rounding leftovers of an exact tiling.
    if (b >= horizon * (1.0 - 1e-12)) break;
    bp.push_back(b);
  }
  bp.push_back(horizon);
  return bp;
}

PiecewiseGenerator::PiecewiseGenerator(std::vector<double> breakpoints, std::vector<HermitianOperator> operators)
    : bp_(std::move(breakpoints)), ops_(std::move(operators)) {
  if (ops_.empty() || bp_.size() != ops_.size() + 1)
    throw InvalidArgument("PiecewiseGenerator: need one operator per segment");
  for (std::size_t k = 0; k + 1 < bp_.size(); ++k)
    if (!(bp_[k + 1] > bp_[k])) throw InvalidArgument("PiecewiseGenerator: breakpoints must increase");
  for (const auto& op : ops_)
    if (op.dim() != ops_.front().dim()) throw DomainMismatch("PiecewiseGenerator: operator dimensions differ");
}

std::size_t PiecewiseGenerator::segment_index(double t) const {
  const double slack = 1e-12 * std::max(1.0, std::abs(horizon()));
  if (!(t >= bp_.front() - slack && t <= bp_.back() + slack)) {
    std::ostringstream os;
    os << "t = " << t << " outside [" << bp_.front() << ", " << bp_.back() << "]";
    throw RangeError(os.str());
  }
  const auto it = std::upper_bound(bp_.begin(), bp_.end(), t);
  const auto n = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - bp_.begin() - 1));
  return std::min(n, ops_.size() - 1);
}

PiecewiseGenerator window_average(const Generator& a, std::vector<double> breakpoints,
                                  std::span<const double> splits) {
  const std::size_t n = breakpoints.size() - 1;
  std::vector<std::optional<HermitianOperator>> out(n);
  auto f = [&a](double t) { return a(t).matrix(); };
  parallel_for(n, [&](std::size_t k) {
    const double lo = breakpoints[k], hi = breakpoints[k + 1];
    const auto q = integrate(f, lo, hi, splits);
    out[k] = HermitianOperator::symmetrized(q.integral / (hi - lo));
  });
  std::vector<HermitianOperator> ops;
  ops.reserve(n);
  for (auto& o : out) ops.push_back(std::move(*o));
  return PiecewiseGenerator(std::move(breakpoints), std::move(ops));
}

PiecewiseGenerator segment_average(const DrivenHamiltonian& family, const AveragingSchedule& schedule,
                                   double level_T) {
  schedule.validate();
  if (!(level_T > 0.0)) throw InvalidArgument("segment_average: level_T must be > 0");
  const double eps = schedule.eps;
  return window_average([&family, eps](double t) { return family.at(eps * t); },
                        uniform_breakpoints(schedule.horizon, level_T));
}

namespace {

Matrix exp_from(const Eigensystem& es, double scale, double tau) {
  Vector ph(es.values.size());
  for (Index k = 0; k < ph.size(); ++k) ph(k) = std::exp(Complex(0.0, -scale * es.values(k) * tau));
  return es.vectors * ph.asDiagonal() * es.vectors.adjoint();
}

}  // namespace

PiecewisePropagator::PiecewisePropagator(PiecewiseGenerator gen, double scale)
    : gen_(std::move(gen)), scale_(scale) {
  const std::size_t n = gen_.segments();
  eig_.resize(n);
  factors_.resize(n);
  parallel_for(n, [&](std::size_t k) {
    eig_[k] = eigensystem(gen_.op(k));
    factors_[k] = exp_from(eig_[k], scale_, gen_.length(k));
  });
  prefix_.reserve(n + 1);
  prefix_.push_back(Matrix::Identity(gen_.dim(), gen_.dim()));
  for (std::size_t k = 0; k < n; ++k) prefix_.push_back(factors_[k] * prefix_.back());
}

Matrix PiecewisePropagator::matrix_at(double t) const {
  const std::size_t n = gen_.segment_index(t);
  const double tau = t - gen_.breakpoints()[n];
  if (tau == 0.0) return prefix_[n];
  return exp_from(eig_[n], scale_, tau) * prefix_[n];
}

UnitaryMatrix piecewise_propagator(const PiecewiseGenerator& gen, double t) {
  return PiecewisePropagator(gen).at(t);
}

InteractionPicture::InteractionPicture(DrivenHamiltonian family, PiecewiseGenerator gen,
                                       AveragingSchedule schedule)
    : family_(std::move(family)), v_(std::move(gen)), schedule_(schedule) {
  schedule_.validate();
  if (family_.dim != v_.generator().dim()) throw DomainMismatch("InteractionPicture: dimension mismatch");
}

HermitianOperator InteractionPicture::tilde(double t) const {
  const HermitianOperator& avg = v_.generator().at(t);
  if (schedule_.eps == 0.0) return HermitianOperator::zero(avg.dim());
  return (family_.at(schedule_.eps * t) - avg) * (1.0 / schedule_.beta);
}

HermitianOperator InteractionPicture::residual(double t) const {
  return tilde(t).conjugated(v_.matrix_at(t));
}

HermitianOperator interaction_residual(const DrivenHamiltonian& family, const PiecewiseGenerator& gen,
                                       const AveragingSchedule& schedule, double t) {
  return InteractionPicture(family, gen, schedule).residual(t);
}

NestedLevels::NestedLevels(Generator a, const AveragingSchedule& schedule, std::span<const double> splits,
                           int depth)
    : a_(std::move(a)), schedule_(schedule), splits_(splits.begin(), splits.end()) {
  schedule_.validate();
  if (depth < 1) throw InvalidArgument("NestedLevels: depth must be >= 1");
  const std::vector<double> windows = uniform_breakpoints(schedule_.horizon, schedule_.t0_inner);
  for (int k = 0; k < depth; ++k)
    levels_.emplace_back(window_average([this, k](double t) { return integrand(k, t); }, windows, splits_),
                         schedule_.beta);
}

HermitianOperator NestedLevels::integrand(int k, double t) const {
  if (k < 0 || k > depth()) throw InvalidArgument("NestedLevels::integrand: level out of range");
  Matrix m = a_(t).matrix();
  for (int j = 0; j < k; ++j) {
    const Matrix u = U(j, t);
    m = u.adjoint() * (m - average(j).at(t).matrix()) * u;
  }
  return HermitianOperator::symmetrized(m);
}

Matrix NestedLevels::U(int k, double t) const { return levels_.at(static_cast<std::size_t>(k)).matrix_at(t); }

Matrix NestedLevels::K(double t) const {
  const int last = depth() - 1;
  const auto& gl = average(last);
  const std::size_t n = gl.segment_index(t);
  const double lo = gl.breakpoints()[n];
  if (t <= lo) return Matrix::Zero(gl.dim(), gl.dim());
  const auto q = integrate([this, last](double s) { return integrand(last, s).matrix(); }, lo, t, splits_);
  return q.integral - (t - lo) * gl.op(n).matrix();
}

Matrix NestedLevels::U2(double t) const {
  const Matrix u = U(depth() - 1, t);
  const Index d = u.rows();
  return Matrix::Identity(d, d) + Complex(0.0, schedule_.beta) * (u.adjoint() * K(t) * u);
}

NestedLevels nested_average_level(Generator a, const AveragingSchedule& schedule, std::span<const double> splits,
                                  int depth) {
  return NestedLevels(std::move(a), schedule, splits, depth);
}

namespace {

Vector oracle_state(const DrivenHamiltonian& family, double eps, const Vector& psi0, double t0, double t1,
                    const IntegratorConfig& cfg) {
  if (t1 <= t0) return psi0;
  if (family.sparse_at && family.dim > 2) {
    SparseGenerator g = [&family, eps](double t) { return family.sparse(eps * t); };
    return propagate_block(g, t0, t1, psi0, cfg).block;
  }
  Generator g = [&family, eps](double t) { return family.at(eps * t); };
  return propagate_block(g, t0, t1, psi0, cfg).block;
}

}  // namespace

AveragedDynamics::AveragedDynamics(DrivenHamiltonian family, AveragingSchedule schedule, int depth)
    : family_(std::move(family)), schedule_(schedule) {
  schedule_.validate();
  picture_ = std::make_shared<InteractionPicture>(
      family_, segment_average(family_, schedule_, schedule_.t0_outer), schedule_);
  auto pic = picture_;
  const auto& splits = pic->propagator().generator().breakpoints();
  levels_ = std::make_shared<NestedLevels>([pic](double t) { return pic->residual(t); }, schedule_,
                                           std::span<const double>(splits), depth);
}

Reconstruction AveragedDynamics::evaluate(const StateVector& psi0, double t, const IntegratorConfig& cfg) const {
  if (psi0.dim() != family_.dim) throw DomainMismatch("reconstruct_solution: state dimension mismatch");
  if (!(t >= 0.0 && t <= schedule_.horizon * (1.0 + 1e-12))) throw RangeError("reconstruct_solution: t outside horizon");
  const Matrix v = picture_->propagator().matrix_at(t);
  Matrix u01 = levels_->U0(t);
  if (levels_->depth() > 1) u01 = u01 * levels_->U1(t);
  const Matrix u2 = levels_->U2(t);
  const Index d = v.rows();
  const Vector& x = psi0.amplitudes();
  const Vector printed = v * u01 * u2.fullPivLu().solve(x);
  const Matrix id = Matrix::Identity(d, d);
  const Vector alt = v * u01 * (x - Complex(0.0, schedule_.beta) * (levels_->K(t) * x));
  const Vector ref = oracle_state(family_, schedule_.eps, x, 0.0, t, cfg);
  Reconstruction r{StateVector::normalized(printed), printed.norm(), 0.0, StateVector::normalized(alt),
                   alt.norm(), 0.0, (u2 - id).norm(), StateVector::normalized(ref)};
  r.defect = (r.psi.amplitudes() - ref).norm();
  r.alt_defect = (r.psi_alt.amplitudes() - ref).norm();
  return r;
}

Reconstruction reconstruct_solution(const DrivenHamiltonian& family, const AveragingSchedule& schedule,
                                    const StateVector& psi0, double t, const IntegratorConfig& cfg, int depth) {
  return AveragedDynamics(family, schedule, depth).evaluate(psi0, t, cfg);
}

std::vector<double> interaction_picture_defects(const DrivenHamiltonian& family,
                                                const AveragingSchedule& schedule, const StateVector& psi0,
                                                std::span<const double> checkpoints, const IntegratorConfig& cfg) {
  cfg.validate();
  std::vector<double> cps(checkpoints.begin(), checkpoints.end());
  std::sort(cps.begin(), cps.end());
  if (cps.empty()) return {};
  InteractionPicture pic(family, segment_average(family, schedule, schedule.t0_outer), schedule);
  const double beta = schedule.beta;
  Generator ba = [&pic, beta](double t) { return pic.residual(t) * beta; };
  const auto& bps = pic.propagator().generator().breakpoints();
  // Per-leg tolerance so the accumulated refinement defect stays at cfg.tolerance.
  IntegratorConfig leg = cfg;
  leg.tolerance = cfg.tolerance / static_cast<double>(cps.size());
  Vector psi = psi0.amplitudes();
  Vector phi = psi0.amplitudes();
  double prev = 0.0;
  std::vector<double> out;
  for (double t : cps) {
    if (t < 0.0 || t > schedule.horizon * (1.0 + 1e-12)) throw RangeError("interaction_picture_defects: checkpoint outside horizon");
    psi = oracle_state(family, schedule.eps, psi, prev, t, leg);
    if (t > prev) phi = propagate_block(ba, prev, t, phi, leg, std::span<const double>(bps)).block;
    out.push_back((pic.propagator().matrix_at(t) * phi - psi).norm());
    prev = t;
  }
  return out;
}

double averaging_deviation_sup(const DrivenHamiltonian& family, const AveragingSchedule& schedule,
                               const std::optional<RealVector>& weight, std::size_t segment, int samples) {
  schedule.validate();
  if (samples < 2) throw InvalidArgument("averaging_deviation_sup: samples must be >= 2");
  const auto gen = segment_average(family, schedule, schedule.t0_outer);
  if (segment >= gen.segments()) throw RangeError("averaging_deviation_sup: segment out of range");
  if (weight && weight->size() != family.dim) throw DomainMismatch("averaging_deviation_sup: weight size");
  const double lo = gen.breakpoints()[segment], hi = gen.breakpoints()[segment + 1];
  const Matrix& avg = gen.op(segment).matrix();
  double sup = 0.0;
  for (int k = 0; k < samples; ++k) {
    const double t = lo + (hi - lo) * k / (samples - 1);
    Matrix d = family.at(schedule.eps * t).matrix() - avg;
    if (weight) d = d * weight->cast<Complex>().asDiagonal();
    sup = std::max(sup, operator_norm(d));
  }
  return sup;
}

}  // namespace slowdrive
