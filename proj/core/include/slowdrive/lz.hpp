#pragma once

#include <cstdint>
#include <vector>

#include "slowdrive/hermitian.hpp"
#include "slowdrive/models.hpp"

namespace slowdrive {

// Per-segment quantities of the stepwise LZ propagator, T₀ = ε^{-1/2}.
struct LZStep {
  std::int64_t n = 0;
  double b_n = 0.0;    // T₀√(B² + ε²T₀²(n+½)²), rotation angle of f_n
  double t_n = 0.0;    // T₀√ε(n+½), its σ_z part
  double eps_n = 0.0;  // B/(√ε(n+½)), tilt of the axis away from σ_z
};

LZStep lz_step(const LZModel& m, std::int64_t n);

// f_n = e^{-iH̄_nT₀} = cos b_n − i sin b_n/b_n·(BT₀σ_x + εT₀²(n+½)σ_z)
UnitaryMatrix lz_step_unitary(const LZModel& m, std::int64_t n);

// f_{n_end}⋯f_{n_start}
Matrix lz_segment_product(const LZModel& m, std::int64_t n_start, std::int64_t n_end);

enum class Domain { I, II, III };
const char* domain_name(Domain d);

struct DomainTag {
  Domain tag = Domain::II;
  double ratio = 0.0;  // εT₀(n+½)/B
};

inline constexpr double kDomainKappa = 5.0;

DomainTag classify_domain(const LZModel& m, std::int64_t n, double kappa = kDomainKappa);

struct LeadingOrder {
  Domain domain = Domain::I;
  Matrix exact;
  Matrix predicted;       // accumulated angle Σ b_n
  double distance = 0.0;  // spectral norm of exact − predicted
  Matrix predicted_alt;   // Σ t_n (domain I) or N·BT₀ (domain III)
  double distance_alt = 0.0;
};

// Closed-form prediction for f_{n_end}⋯f_{n_start}: e^{-iΣb_nσ_z} in
// domain I, e^{-iΣb_nσ_x} in domain III. Throws DomainMismatch when the range
// is not entirely inside one of these.
LeadingOrder domain_leading_order(const LZModel& m, std::int64_t n_start, std::int64_t n_end,
                                  double kappa = kDomainKappa);

// max of domain_leading_order(m, k, k + count − 1).distance over k in
// [n_start, n_start + span). The pointwise distance is modulated by the
// rotation phase b_n; the maximum tracks its ε_n envelope.
double leading_order_envelope(const LZModel& m, std::int64_t n_start, std::int64_t count, std::int64_t span,
                              double kappa = kDomainKappa);

struct SurvivalOptions {
  double t_max = 20.0;
  bool two_sided = true;        // sweep [−t_max, t_max], else [0, t_max]
  bool lower_eigenstate = true; // ψ₀ lower eigenstate of H at the start, else |↑⟩
  int points = 201;
  IntegratorConfig integrator{};
};

struct SurvivalCurve {
  std::vector<double> t;
  std::vector<double> survival;  // |⟨ψ₀, U(t)ψ₀⟩|²
  double transition = 0.0;       // 1 − final survival
  double excitation = 0.0;       // final weight outside the lower instantaneous eigenstate
  std::int64_t steps = 0;
};

SurvivalCurve lz_survival_curve(const LZModel& m, const SurvivalOptions& opt = {});

struct ResidualDynamics {
  double claimed_transition = 0.0;  // iψ′ = √ε·a_N(t)σ_zψ
  double full_transition = 0.0;     // iψ′ = βA(t)ψ, A = V^{-1}ÃV
};

// Transition probability out of |↑⟩ over [0, horizon], horizon ≤ T₀².
// a_N(t) = εt − εT₀(N+½).
ResidualDynamics residual_dynamics_check(const LZModel& m, double horizon, const IntegratorConfig& cfg = {});

// √ε∫a_n over segment n.
double residual_segment_phase(const LZModel& m, std::int64_t n);

}  // namespace slowdrive
