#include "slowdrive/lz.hpp"

#include <cmath>
#include <sstream>

#include "slowdrive/averaging.hpp"
#include "slowdrive/errors.hpp"
#include "slowdrive/parallel.hpp"
#include "slowdrive/quadrature.hpp"

namespace slowdrive {

namespace {

void require_index(std::int64_t n) {
  if (n < 0) throw RangeError("segment index must be >= 0");
}

Matrix axis_exp(int axis, double angle) {
  std::array<double, 3> b{0.0, 0.0, 0.0};
  b[static_cast<std::size_t>(axis - 1)] = angle;
  return pauli_exp(0.0, b).matrix();
}

}  // namespace

LZStep lz_step(const LZModel& m, std::int64_t n) {
  m.validate();
  require_index(n);
  const double t0 = m.t0();
  const double h = static_cast<double>(n) + 0.5;
  LZStep s;
  s.n = n;
  s.b_n = t0 * std::hypot(m.B, m.eps * t0 * h);
  s.t_n = t0 * std::sqrt(m.eps) * h;
  s.eps_n = m.B / (std::sqrt(m.eps) * h);
  return s;
}

UnitaryMatrix lz_step_unitary(const LZModel& m, std::int64_t n) {
  m.validate();
  require_index(n);
  const double t0 = m.t0();
  return pauli_exp(0.0, {m.B * t0, 0.0, m.eps * t0 * t0 * (static_cast<double>(n) + 0.5)});
}

Matrix lz_segment_product(const LZModel& m, std::int64_t n_start, std::int64_t n_end) {
  require_index(n_start);
  if (n_end < n_start) throw InvalidArgument("lz_segment_product: n_end < n_start");
  const auto count = static_cast<std::size_t>(n_end - n_start + 1);
  std::vector<Matrix> f(count);
  parallel_for(count, [&](std::size_t k) {
    f[k] = lz_step_unitary(m, n_start + static_cast<std::int64_t>(k)).matrix();
  });
  Matrix p = Matrix::Identity(2, 2);
  for (const auto& x : f) p = x * p;
  return p;
}

const char* domain_name(Domain d) {
  switch (d) {
    case Domain::I:
      return "I";
    case Domain::II:
      return "II";
    case Domain::III:
      return "III";
  }
  return "?";
}

DomainTag classify_domain(const LZModel& m, std::int64_t n, double kappa) {
  m.validate();
  require_index(n);
  if (!(kappa > 1.0)) throw InvalidArgument("classify_domain: kappa must be > 1");
  DomainTag d;
  const double drive = m.eps * m.t0() * (static_cast<double>(n) + 0.5);
  d.ratio = m.B > 0.0 ? drive / m.B : std::numeric_limits<double>::infinity();
  d.tag = d.ratio > kappa ? Domain::I : (d.ratio < 1.0 / kappa ? Domain::III : Domain::II);
  return d;
}

LeadingOrder domain_leading_order(const LZModel& m, std::int64_t n_start, std::int64_t n_end, double kappa) {
  require_index(n_start);
  if (n_end < n_start) throw InvalidArgument("domain_leading_order: n_end < n_start");
  const Domain first = classify_domain(m, n_start, kappa).tag;
  for (std::int64_t n = n_start; n <= n_end; ++n) {
    const Domain d = classify_domain(m, n, kappa).tag;
    if (d != first || d == Domain::II) {
      std::ostringstream os;
      os << "domain_leading_order: segments " << n_start << ".." << n_end << " are not all in domain I or all in III"
         << " (segment " << n << " is " << domain_name(d) << ")";
      throw DomainMismatch(os.str());
    }
  }
  LeadingOrder out;
  out.domain = first;
  out.exact = lz_segment_product(m, n_start, n_end);
  double sum_b = 0.0, sum_t = 0.0;
  for (std::int64_t n = n_start; n <= n_end; ++n) {
    const LZStep s = lz_step(m, n);
    sum_b += s.b_n;
    sum_t += s.t_n;
  }
  const int axis = first == Domain::I ? 3 : 1;
  out.predicted = axis_exp(axis, sum_b);
  const double alt = first == Domain::I ? sum_t : static_cast<double>(n_end - n_start + 1) * m.B * m.t0();
  out.predicted_alt = axis_exp(axis, alt);
  out.distance = operator_norm(out.exact - out.predicted);
  out.distance_alt = operator_norm(out.exact - out.predicted_alt);
  return out;
}

double leading_order_envelope(const LZModel& m, std::int64_t n_start, std::int64_t count, std::int64_t span,
                              double kappa) {
  if (count < 1 || span < 1) throw InvalidArgument("leading_order_envelope: count and span must be >= 1");
  double e = 0.0;
  for (std::int64_t k = n_start; k < n_start + span; ++k)
    e = std::max(e, domain_leading_order(m, k, k + count - 1, kappa).distance);
  return e;
}

SurvivalCurve lz_survival_curve(const LZModel& m, const SurvivalOptions& opt) {
  m.validate_sweep();
  opt.integrator.validate();
  if (!(opt.t_max > 0.0)) throw InvalidArgument("lz_survival_curve: t_max must be > 0");
  if (opt.points < 2) throw InvalidArgument("lz_survival_curve: need at least 2 points");
  const double start = opt.two_sided ? -opt.t_max : 0.0;
  Vector psi0(2);
  if (opt.lower_eigenstate) {
    psi0 = eigensystem(lz_hamiltonian(m, start)).vectors.col(0);
  } else {
    psi0 << 1.0, 0.0;
  }
  Generator gen = [m](double t) { return lz_hamiltonian(m, t); };
  SurvivalCurve c;
  Vector psi = psi0;
  double prev = start;
  for (int k = 0; k < opt.points; ++k) {
    const double t = start + (opt.t_max - start) * k / (opt.points - 1);
    if (t > prev) {
      auto r = propagate_block(gen, prev, t, psi, opt.integrator);
      psi = r.block;
      c.steps += r.steps;
    }
    c.t.push_back(t);
    c.survival.push_back(std::norm(psi0.dot(psi)));
    prev = t;
  }
  c.transition = 1.0 - c.survival.back();
  const Vector lower = eigensystem(lz_hamiltonian(m, opt.t_max)).vectors.col(0);
  c.excitation = 1.0 - std::norm(lower.dot(psi));
  return c;
}

ResidualDynamics residual_dynamics_check(const LZModel& m, double horizon, const IntegratorConfig& cfg) {
  m.validate();
  const double t0 = m.t0();
  if (!(horizon > 0.0) || horizon > t0 * t0 * (1.0 + 1e-12))
    throw RangeError("residual_dynamics_check: horizon must lie in (0, T0^2]");
  const auto sched = AveragingSchedule::from_eps(m.eps, horizon);
  const auto fam = lz_family(m.B);
  const InteractionPicture pic(fam, segment_average(fam, sched, sched.t0_outer), sched);
  const auto& bps = pic.propagator().generator().breakpoints();
  const double root = std::sqrt(m.eps);
  Generator claimed = [m, t0, root](double t) {
    const double n = std::floor(t / t0);
    return HermitianOperator(root * (m.eps * t - m.eps * t0 * (n + 0.5)) * pauli(3));
  };
  Generator full = [&pic, root](double t) { return pic.residual(t) * root; };
  ResidualDynamics r;
  r.claimed_transition = std::norm(time_ordered_exp(claimed, 0.0, horizon, cfg, bps).matrix()(1, 0));
  r.full_transition = std::norm(time_ordered_exp(full, 0.0, horizon, cfg, bps).matrix()(1, 0));
  return r;
}

double residual_segment_phase(const LZModel& m, std::int64_t n) {
  m.validate();
  require_index(n);
  const double t0 = m.t0();
  const double lo = static_cast<double>(n) * t0;
  const auto q = integrate(
      [&](double t) { return Matrix::Constant(1, 1, Complex(m.eps * t - m.eps * t0 * (static_cast<double>(n) + 0.5))); },
      lo, lo + t0);
  return std::sqrt(m.eps) * q.integral(0, 0).real();
}

}  // namespace slowdrive
