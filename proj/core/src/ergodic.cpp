#include "slowdrive/ergodic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "slowdrive/errors.hpp"

namespace slowdrive {

const char* norm_method_name(NormMethod m) {
  return m == NormMethod::Dense ? "dense-norm" : "power-iteration";
}

ProjectorRule identity_projector() {
  return [](std::size_t, const Eigensystem& es) {
    const Index n = es.values.size();
    return Matrix(Matrix::Identity(n, n));
  };
}

ProjectorRule continuum_projector(double lo, double hi) {
  return [lo, hi](std::size_t, const Eigensystem& es) {
    const Index n = es.values.size();
    RealVector keep(n);
    for (Index k = 0; k < n; ++k) keep(k) = (es.values(k) >= lo && es.values(k) <= hi) ? 0.0 : 1.0;
    return Matrix(es.vectors * keep.cast<Complex>().asDiagonal() * es.vectors.adjoint());
  };
}

namespace {

// Σ_{q<n} e^{iqx}
Complex geometric(double x, std::int64_t n) {
  const double nd = static_cast<double>(n);
  if (std::abs(x) * nd < 1e-9) return {nd, 0.5 * x * nd * (nd - 1.0)};
  const Complex den(-2.0 * std::pow(std::sin(0.5 * x), 2), std::sin(x));
  const double xn = x * nd;
  const Complex num(-2.0 * std::pow(std::sin(0.5 * xn), 2), std::sin(xn));
  return num / den;
}

struct SegmentData {
  Eigensystem es;
  Matrix x;       // Q†(A·P_c)Q
  Matrix prefix;  // V(b_n)
  bool identity_prefix = false;
};

class AverageEngine {
 public:
  AverageEngine(const PiecewiseGenerator& dyn, const HermitianOperator& A, const ProjectorRule& pc) : dyn_(dyn) {
    const std::size_t n = dyn.segments();
    seg_.resize(n);
    Matrix v = Matrix::Identity(dyn.dim(), dyn.dim());
    for (std::size_t m = 0; m < n; ++m) {
      auto& s = seg_[m];
      s.es = eigensystem(dyn.op(m));
      const Matrix& q = s.es.vectors;
      s.x = q.adjoint() * (A.matrix() * pc(m, s.es)) * q;
      s.prefix = v;
      s.identity_prefix = m == 0;
      const Vector ph = (s.es.values.cast<Complex>() * Complex(0.0, -dyn.length(m))).array().exp();
      v = q * ph.asDiagonal() * (q.adjoint() * v);
    }
  }

  // (1/(tb − ta))·trapezoid sum on n uniform nodes of [ta, tb].
  Matrix average(double ta, double tb, std::int64_t n) const {
    const Index d = dyn_.dim();
    Matrix acc = Matrix::Zero(d, d);
    const double dt = (tb - ta) / static_cast<double>(n - 1);
    auto node = [&](std::int64_t k) { return k == n - 1 ? tb : ta + dt * static_cast<double>(k); };
    std::int64_t k = 0;
    while (k < n) {
      const std::size_t m = dyn_.segment_index(node(k));
      std::int64_t kb = k;
      while (kb + 1 < n && dyn_.segment_index(node(kb + 1)) == m) ++kb;
      const auto& s = seg_[m];
      const double b = dyn_.breakpoints()[m];
      const double ta_loc = node(k) - b, tb_loc = node(kb) - b;
      const std::int64_t cnt = kb - k + 1;
      Matrix g(d, d);
      for (Index j = 0; j < d; ++j)
        for (Index i = 0; i < d; ++i) {
          const double w = s.es.values(i) - s.es.values(j);
          Complex sum = std::exp(Complex(0.0, w * ta_loc)) * geometric(w * dt, cnt) * dt;
          if (k == 0) sum -= 0.5 * dt * std::exp(Complex(0.0, w * ta_loc));
          if (kb == n - 1) sum -= 0.5 * dt * std::exp(Complex(0.0, w * tb_loc));
          g(i, j) = s.x(i, j) * sum;
        }
      const Matrix& q = s.es.vectors;
      Matrix c = q * g * q.adjoint();
      if (!s.identity_prefix) c = s.prefix.adjoint() * c * s.prefix;
      acc += c;
      k = kb + 1;
    }
    return acc / (tb - ta);
  }

 private:
  const PiecewiseGenerator& dyn_;
  std::vector<SegmentData> seg_;
};

double norm_of(const Matrix& m, NormMethod* used) {
  if (m.rows() <= kDenseNormLimit) {
    if (used) *used = NormMethod::Dense;
    return operator_norm(m);
  }
  if (used) *used = NormMethod::PowerIteration;
  return operator_norm_power(m, 50, 1e-6);
}

}  // namespace

TimeAverageResult uniform_time_average(const PiecewiseGenerator& dynamics, const HermitianOperator& A,
                                       const ProjectorRule& pc, double T, std::size_t samples,
                                       double block_length) {
  if (A.dim() != dynamics.dim()) throw DomainMismatch("uniform_time_average: dimensions differ");
  if (!(T > 0.0) || T > dynamics.horizon() * (1.0 + 1e-12))
    throw RangeError("uniform_time_average: T must lie in (0, horizon]");
  if (samples < 3) throw InvalidArgument("uniform_time_average: need at least 3 samples");
  if (!(block_length > 0.0)) throw InvalidArgument("uniform_time_average: block_length must be > 0");

  const AverageEngine engine(dynamics, A, pc);
  TimeAverageResult out;
  out.T = T;
  out.samples = samples;
  const auto n = static_cast<std::int64_t>(samples);
  const Matrix avg = engine.average(0.0, T, n);
  out.value = norm_of(avg, &out.method);
  out.power_value = operator_norm_power(avg, 50, 1e-6);
  const double fine = norm_of(engine.average(0.0, T, 2 * n - 1), nullptr);
  out.resolution_change = out.value > 0.0 ? std::abs(fine - out.value) / out.value : std::abs(fine);
  if (out.resolution_change > 0.02) {
    std::ostringstream os;
    os << "uniform_time_average: doubling the nodes changed the value by " << 100.0 * out.resolution_change
       << "% (> 2%); increase samples";
    throw ResolutionError(os.str());
  }

  if (!std::isfinite(block_length) || block_length >= T) {
    out.block_values = {out.value};
  } else {
    const double per_time = static_cast<double>(n - 1) / T;
    for (double a = 0.0; a < T - 1e-9 * T; a += block_length) {
      const double b = std::min(a + block_length, T);
      const auto nb = std::max<std::int64_t>(3, std::llround(per_time * (b - a)) + 1);
      out.block_values.push_back(norm_of(engine.average(a, b, nb), nullptr));
    }
  }
  const auto [mn, mx] = std::minmax_element(out.block_values.begin(), out.block_values.end());
  out.block_spread = *mn > 0.0 ? *mx / *mn : (*mx > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
  return out;
}

double recurrence_horizon(const Eigensystem& es, const Matrix& pc) {
  std::vector<double> levels;
  for (Index k = 0; k < es.values.size(); ++k)
    if ((pc * es.vectors.col(k)).norm() > 0.5) levels.push_back(es.values(k));
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < levels.size(); ++k) {
    const double d = levels[k] - levels[k - 1];
    if (d > 1e-12) gap = std::min(gap, d);
  }
  return 2.0 * std::numbers::pi / gap;
}

TimeAverageResult rage_fixed_hamiltonian(const HermitianOperator& H, const HermitianOperator& A, double T,
                                         const RageOptions& opt) {
  const ProjectorRule pc = opt.discrete_window ? continuum_projector(opt.discrete_window->first,
                                                                     opt.discrete_window->second)
                                               : identity_projector();
  const PiecewiseGenerator dyn({0.0, T}, {H});
  TimeAverageResult out = uniform_time_average(dyn, A, pc, T, opt.samples, opt.block_length);
  const Eigensystem es = eigensystem(H);
  const double horizon = recurrence_horizon(es, pc(0, es));
  if (T > horizon) {
    std::ostringstream os;
    os << "T = " << T << " exceeds the recurrence horizon " << horizon << " of the continuum surrogate";
    out.warnings.push_back(os.str());
  }
  return out;
}

std::vector<Vector> evolve_states(const DrivenHamiltonian& family, double eps, const Vector& psi0,
                                  std::span<const double> times, const IntegratorConfig& cfg) {
  if (psi0.size() != family.dim) throw DomainMismatch("evolve_states: state dimension differs from the family");
  std::vector<Vector> out;
  out.reserve(times.size());
  Matrix x = psi0;
  double prev = 0.0;
  for (double t : times) {
    if (t < prev) throw InvalidArgument("evolve_states: times must be non-decreasing from 0");
    if (t > prev) {
      BlockPropagation r;
      if (family.sparse_at) {
        const SparseGenerator g = [&family, eps](double tt) { return family.sparse_at(eps * tt); };
        r = propagate_block(g, prev, t, x, cfg);
      } else {
        const Generator g = [&family, eps](double tt) { return family.at(eps * tt); };
        r = propagate_block(g, prev, t, x, cfg);
      }
      x = std::move(r.block);
    }
    prev = t;
    out.emplace_back(x.col(0));
  }
  return out;
}

namespace {

double expectation(const DrivenHamiltonian& family, double s, const Vector& psi) {
  if (family.sparse_at) return psi.dot(family.sparse_at(s) * psi).real();
  return psi.dot(family.at(s).matrix() * psi).real();
}

RealVector bracket_power(const LatticeModel& m, double p) {
  RealVector w(m.sites);
  for (Index j = 0; j < m.sites; ++j) w(j) = std::pow(m.bracket(j), p);
  return w;
}

double japanese(double t) { return std::sqrt(1.0 + t * t); }

}  // namespace

EnergyDrift energy_drift(const DrivenHamiltonian& family, double eps, const Vector& psi0, double t_max,
                         std::size_t checkpoints, const IntegratorConfig& cfg) {
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw InvalidArgument("energy_drift: eps must be finite and >= 0");
  if (!(t_max > 0.0)) throw InvalidArgument("energy_drift: t_max must be > 0");
  if (eps > 0.0 && eps * t_max > 1.0 + 1e-12) throw RangeError("energy_drift: t_max must not exceed 1/eps");
  if (checkpoints < 2) throw InvalidArgument("energy_drift: need at least 2 checkpoints");
  std::vector<double> ts(checkpoints);
  for (std::size_t k = 0; k < checkpoints; ++k)
    ts[k] = t_max * static_cast<double>(k) / static_cast<double>(checkpoints - 1);
  ts.back() = t_max;
  const auto states = evolve_states(family, eps, psi0, ts, cfg);
  EnergyDrift out;
  out.t = ts;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    out.energy.push_back(expectation(family, eps * ts[k], states[k]));
    out.drift = std::max(out.drift, std::abs(out.energy.back() - out.energy.front()));
  }
  return out;
}

DecaySeries small_perturbation_decay(const LatticeModel& base, const PotentialFn& W, const Vector& psi0,
                                     std::span<const double> t_grid, const IntegratorConfig& cfg,
                                     const DecayOptions& opt) {
  base.validate();
  if (!W) throw InvalidArgument("small_perturbation_decay: perturbation missing");
  if (psi0.size() != base.sites) throw DomainMismatch("small_perturbation_decay: state dimension differs");
  const HermitianOperator h0 = lattice_hamiltonian(base, 0.0);
  const Eigensystem es = eigensystem(h0);
  const RealVector w = bracket_power(base, -base.sigma);
  const Matrix& q = es.vectors;
  const Vector c0 = q.adjoint() * psi0;

  DecaySeries out;
  out.t.assign(t_grid.begin(), t_grid.end());
  for (double t : out.t) {
    const Vector ph = (es.values.cast<Complex>() * Complex(0.0, -t)).array().exp();
    const Vector psi = q * ph.cwiseProduct(c0);
    out.base.push_back(w.cast<Complex>().cwiseProduct(psi).norm());
  }

  DrivenHamiltonian pert;
  pert.dim = base.sites;
  const SparseMatrix hs = lattice_hamiltonian_sparse(base, 0.0);
  pert.sparse_at = [hs, base, W](double t) {
    SparseMatrix h = hs;
    for (Index j = 0; j < base.sites; ++j) h.coeffRef(j, j) += W(base.position(j), t);
    return h;
  };
  pert.at = [pert](double t) { return HermitianOperator(Matrix(pert.sparse_at(t))); };
  const auto states = evolve_states(pert, 1.0, psi0, out.t, cfg);
  for (const auto& s : states) out.perturbed.push_back(w.cast<Complex>().cwiseProduct(s).norm());

  // Decay exponent by least squares on log–log.
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int cnt = 0;
  for (std::size_t k = 0; k < out.t.size(); ++k) {
    if (out.t[k] < opt.fit_from || out.base[k] <= 0.0) continue;
    const double x = std::log(japanese(out.t[k])), y = std::log(out.base[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++cnt;
  }
  if (cnt >= 2) out.alpha = -(cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  for (std::size_t k = 0; k < out.t.size(); ++k)
    out.base_constant = std::max(out.base_constant, std::pow(japanese(out.t[k]), out.alpha) * out.base[k]);

  const Matrix dq = w.cast<Complex>().asDiagonal() * q;
  std::vector<double> taus{0.0};
  taus.insert(taus.end(), out.t.begin(), out.t.end());
  for (double tau : taus) {
    const Vector ph = (es.values.cast<Complex>() * Complex(0.0, -tau)).array().exp();
    const Matrix m = dq * ph.asDiagonal() * dq.adjoint();
    out.operator_constant = std::max(out.operator_constant, std::pow(japanese(tau), out.alpha) * operator_norm(m));
  }
  for (double t : out.t) {
    if (t <= 0.0) continue;
    const int n = 2000;
    const double h = t / n;
    double integral = 0.0;
    for (int k = 0; k <= n; ++k) {
      const double s = h * k;
      const double f = std::pow(japanese(t - s), -out.alpha) * std::pow(japanese(s), -out.alpha);
      integral += (k == 0 || k == n ? 0.5 : 1.0) * h * f;
    }
    out.convolution_constant = std::max(out.convolution_constant, std::pow(japanese(t), out.alpha) * integral);
  }
  const RealVector w2 = bracket_power(base, 2.0 * base.sigma);
  for (double t : out.t)
    for (Index j = 0; j < base.sites; ++j)
      out.weighted_perturbation = std::max(out.weighted_perturbation, std::abs(w2(j) * W(base.position(j), t)));
  out.contraction = out.weighted_perturbation * out.operator_constant * out.convolution_constant;
  if (out.contraction >= 1.0) {
    out.within_bound = false;
    if (opt.require_contraction) {
      std::ostringstream os;
      os << "small_perturbation_decay: measured contraction factor " << out.contraction
         << " >= 1; the perturbation is too large for the Duhamel argument";
      throw PropositionInapplicable(os.str());
    }
    return out;
  }
  const double c = out.base_constant / (1.0 - out.contraction);
  for (std::size_t k = 0; k < out.t.size(); ++k)
    if (out.perturbed[k] > c * std::pow(japanese(out.t[k]), -out.alpha) * (1.0 + 1e-9)) out.within_bound = false;
  return out;
}

namespace {

struct CookRun {
  std::vector<double> diff;
};

CookRun cook_run(const LatticeModel& model, double eps, const Vector& psi0, std::span<const double> ts,
                 const CookOptions& opt) {
  const auto states = evolve_states(lattice_family(model), eps, psi0, ts, opt.integrator);
  LatticeModel free = model;
  free.potential = nullptr;
  const HermitianOperator h0 = opt.terminal_s ? lattice_hamiltonian(model, *opt.terminal_s)
                                              : lattice_hamiltonian(free, 0.0);
  const Eigensystem es = eigensystem(h0);
  CookRun out;
  Vector prev;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const Vector ph = (es.values.cast<Complex>() * Complex(0.0, ts[k])).array().exp();
    Vector om = es.vectors * ph.cwiseProduct(es.vectors.adjoint() * states[k]);
    if (k > 0) out.diff.push_back((om - prev).norm());
    prev = std::move(om);
  }
  return out;
}

}  // namespace

CookSeries cook_wave_operator(const LatticeModel& model, double eps, const Vector& psi0,
                              std::span<const double> T_grid, const CookOptions& opt) {
  model.validate();
  if (T_grid.size() < 2) throw InvalidArgument("cook_wave_operator: need at least two times");
  for (std::size_t k = 0; k < T_grid.size(); ++k)
    if (T_grid[k] < 0.0 || (k > 0 && !(T_grid[k] > T_grid[k - 1])))
      throw InvalidArgument("cook_wave_operator: times must increase from >= 0");
  if (!(eps >= 0.0)) throw InvalidArgument("cook_wave_operator: eps must be >= 0");
  const CookRun run = cook_run(model, eps, psi0, T_grid, opt);
  CookSeries out;
  out.T.assign(T_grid.begin() + 1, T_grid.end());
  out.difference = run.diff;
  if (opt.boundary_check) {
    const Index L = model.sites;
    const Index big = (L % 2 == 0) ? 2 * L : 2 * L + 1;
    const Index off = (big - L) / 2;
    Vector padded = Vector::Zero(big);
    padded.segment(off, L) = psi0;
    const CookRun ref = cook_run(model.resized(big), eps, padded, T_grid, opt);
    for (std::size_t k = 0; k < run.diff.size(); ++k) {
      const double dev = std::abs(run.diff[k] - ref.diff[k]);
      out.boundary_deviation.push_back(dev);
      if (dev > opt.boundary_tolerance * ref.diff[k] + 1e-10) {
        std::ostringstream os;
        os << "cook_wave_operator: boundary contamination at T = " << out.T[k] << " (difference " << run.diff[k]
           << " vs " << ref.diff[k] << " on " << big << " sites); enlarge L";
        throw BoundaryContamination(os.str());
      }
    }
  }
  out.peak = static_cast<std::size_t>(std::max_element(out.difference.begin(), out.difference.end()) -
                                      out.difference.begin());
  for (std::size_t k = out.peak + 1; k < out.difference.size(); ++k)
    if (!(out.difference[k] < out.difference[k - 1])) out.decreasing_tail = false;
  return out;
}

void PropagationConfig::validate() const {
  std::ostringstream os;
  if (!(R > 0.0)) os << " R must be > 0;";
  if (!(X0 > 0.0)) os << " X0 must be > 0;";
  if (!(sigma > 0.0)) os << " sigma must be > 0;";
  if (!(delta > 0.0)) os << " delta must be > 0;";
  if (!(C >= 0.0)) os << " C must be >= 0;";
  if (samples < 3) os << " samples must be >= 3;";
  if (!os.str().empty()) throw ValidationError("PropagationConfig:" + os.str());
}

namespace {

void guard_edges(const Vector& psi, const PropagationConfig& cfg, double t, double* max_mass) {
  const double m = edge_mass(psi, cfg.edge_fraction);
  *max_mass = std::max(*max_mass, m);
  if (m > cfg.edge_tolerance) {
    std::ostringstream os;
    os << "boundary contamination: edge mass " << m << " at t = " << t << " exceeds " << cfg.edge_tolerance
       << "; enlarge L";
    throw BoundaryContamination(os.str());
  }
}

}  // namespace

PropagationEstimate propagation_estimate(const LatticeModel& model, double eps, const PropagationConfig& cfg,
                                         const Vector& psi0, double T, const IntegratorConfig& icfg) {
  cfg.validate();
  model.validate();
  if (!(T > 0.0)) throw InvalidArgument("propagation_estimate: T must be > 0");
  std::vector<double> ts(cfg.samples);
  for (std::size_t k = 0; k < cfg.samples; ++k)
    ts[k] = T * static_cast<double>(k) / static_cast<double>(cfg.samples - 1);
  const auto states = evolve_states(lattice_family(model), eps, psi0, ts, icfg);
  const SparseMatrix p = momentum_sparse(model);
  const auto wd = weight_and_dilation(model);
  const Matrix fa = smooth_spectral_cutoff(eigensystem(wd.dilation), cfg.R);
  RealVector local(model.sites);
  for (Index j = 0; j < model.sites; ++j)
    local(j) = std::pow(model.bracket(j), -cfg.sigma) * smooth_indicator(model.position(j), cfg.X0);

  PropagationEstimate out;
  const double dt = T / static_cast<double>(cfg.samples - 1);
  for (std::size_t k = 0; k < states.size(); ++k) {
    guard_edges(states[k], cfg, ts[k], &out.max_edge_mass);
    const Vector phi = p * states[k];
    const double a = phi.dot(fa * phi).real();
    const double b = (phi.cwiseAbs2().array() * local.array()).sum();
    const double wgt = (k == 0 || k + 1 == states.size()) ? 0.5 * dt : dt;
    out.lhs += wgt * a;
    out.local_term += wgt * b;
  }
  out.lhs /= cfg.R;
  out.local_term /= cfg.R;
  out.rhs = cfg.C * out.local_term + 2.0 * psi0.squaredNorm();
  out.holds = out.lhs <= out.rhs;
  return out;
}

AcReport ac_long_time_check(const LatticeModel& model, double eps, const Vector& psi0, const AcOptions& opt,
                            const IntegratorConfig& cfg) {
  model.validate();
  opt.cutoffs.validate();
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("ac_long_time_check: eps must lie in (0, 1)");
  if (!(opt.T > std::exp(1.0))) throw InvalidArgument("ac_long_time_check: T must exceed e");
  if (opt.window_samples < 3 || opt.log_samples < 3) throw InvalidArgument("ac_long_time_check: too few samples");
  AcReport out;
  const double natural = std::exp(std::pow(eps, -0.25));
  out.horizon = std::min(natural, opt.horizon_cap);
  out.horizon_truncated = natural > opt.horizon_cap;
  const double s_max = eps * out.horizon;
  const double lnT = std::log(opt.T);
  out.R = opt.R > 0.0 ? opt.R : opt.T / (lnT * lnT);
  out.window_length = 1.0 / std::sqrt(eps);
  const auto windows = static_cast<std::size_t>(std::floor(opt.T / out.window_length + 1e-9));
  if (windows < 2) throw InvalidArgument("ac_long_time_check: T must cover at least two windows");

  DrivenHamiltonian fam = lattice_family(model);
  const auto base_sparse = fam.sparse_at;
  fam.sparse_at = [base_sparse, s_max](double s) { return base_sparse(std::min(s, s_max)); };
  fam.at = [fam](double s) { return HermitianOperator(Matrix(fam.sparse_at(s))); };

  std::vector<double> times;
  const std::size_t ws = opt.window_samples;
  for (std::size_t n = 0; n < windows; ++n)
    for (std::size_t k = 0; k < ws; ++k)
      times.push_back(out.window_length * (static_cast<double>(n) + static_cast<double>(k) / static_cast<double>(ws - 1)));
  std::vector<double> logt(opt.log_samples);
  for (std::size_t k = 0; k < opt.log_samples; ++k)
    logt[k] = std::exp(lnT * static_cast<double>(k) / static_cast<double>(opt.log_samples - 1));
  logt.back() = opt.T;
  times.insert(times.end(), logt.begin(), logt.end());
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  const auto states = evolve_states(fam, eps, psi0, times, cfg);
  auto state_at = [&](double t) -> const Vector& {
    const auto it = std::lower_bound(times.begin(), times.end(), t);
    return states[static_cast<std::size_t>(it - times.begin())];
  };

  const SparseMatrix p = momentum_sparse(model);
  RealVector wsig(model.sites);
  for (Index j = 0; j < model.sites; ++j) wsig(j) = std::pow(model.bracket(j), -opt.cutoffs.sigma);
  for (std::size_t k = 0; k < states.size(); ++k) {
    const double m = edge_mass(states[k], opt.cutoffs.edge_fraction);
    out.max_edge_mass = std::max(out.max_edge_mass, m);
  }
  if (out.max_edge_mass > opt.cutoffs.edge_tolerance) {
    std::ostringstream os;
    os << "ac_long_time_check: edge mass " << out.max_edge_mass << " exceeds " << opt.cutoffs.edge_tolerance
       << "; enlarge L";
    throw BoundaryContamination(os.str());
  }
  auto local = [&](const Vector& psi) {
    const Vector phi = p * psi;
    return (phi.cwiseAbs2().array() * wsig.array()).sum();
  };
  for (std::size_t n = 0; n < windows; ++n) {
    const double h = out.window_length / static_cast<double>(ws - 1);
    double v = 0.0;
    for (std::size_t k = 0; k < ws; ++k) {
      const double t = out.window_length * (static_cast<double>(n) + static_cast<double>(k) / static_cast<double>(ws - 1));
      v += (k == 0 || k + 1 == ws ? 0.5 : 1.0) * h * local(state_at(t));
    }
    out.window_values.push_back(v);
  }
  out.window_sup = *std::max_element(out.window_values.begin(), out.window_values.end());
  const std::size_t half = windows / 2;
  const double first = *std::max_element(out.window_values.begin(), out.window_values.begin() + static_cast<std::ptrdiff_t>(half));
  const double second = *std::max_element(out.window_values.begin() + static_cast<std::ptrdiff_t>(half), out.window_values.end());
  out.windows_bounded = second <= first;

  const auto wd = weight_and_dilation(model);
  const Matrix fa = smooth_spectral_cutoff(eigensystem(wd.dilation), out.R);
  const double du = lnT / static_cast<double>(opt.log_samples - 1);
  for (std::size_t k = 0; k < opt.log_samples; ++k) {
    const Vector phi = p * state_at(logt[k]);
    out.weighted_lhs += (k == 0 || k + 1 == opt.log_samples ? 0.5 : 1.0) * du * phi.dot(fa * phi).real();
  }
  const Vector& psiT = state_at(opt.T);
  out.norm2 = psiT.squaredNorm();
  const Eigensystem ep = eigensystem(momentum_operator(model));
  const Matrix low = smooth_spectral_cutoff(ep, opt.cutoffs.delta);
  const Vector high = psiT - low * psiT;
  out.localized_mass = high.dot(fa * high).real();
  out.low_momentum_mass = psiT.dot(low * psiT).real();
  return out;
}

}  // namespace slowdrive
