#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "slowdrive/hermitian.hpp"
#include "slowdrive/models.hpp"

namespace slowdrive {

struct AveragingSchedule {
  double eps = 0.0;
  double beta = 0.0;      // √ε
  double t0_outer = 0.0;  // ε^{-1/2}
  double t0_inner = 0.0;  // β^{-1/2} = ε^{-1/4}
  double horizon = 0.0;

  static AveragingSchedule from_eps(double eps, double horizon);
  void validate() const;
};

// 0 = b_0 < b_1 < … < b_n = horizon at multiples of `length`; the last
// segment is shorter when length does not divide the horizon.
std::vector<double> uniform_breakpoints(double horizon, double length);

class PiecewiseGenerator {
 public:
  PiecewiseGenerator(std::vector<double> breakpoints, std::vector<HermitianOperator> operators);

  std::size_t segments() const { return ops_.size(); }
  const std::vector<double>& breakpoints() const { return bp_; }
  const HermitianOperator& op(std::size_t n) const { return ops_.at(n); }
  double horizon() const { return bp_.back(); }
  double length(std::size_t n) const { return bp_.at(n + 1) - bp_.at(n); }
  // Segment containing t; the right end belongs to the last segment.
  std::size_t segment_index(double t) const;
  const HermitianOperator& at(double t) const { return ops_[segment_index(t)]; }
  Index dim() const { return ops_.front().dim(); }

 private:
  std::vector<double> bp_;
  std::vector<HermitianOperator> ops_;
};

// Operators (1/|I|)∫_I H(εt) dt over the segments of uniform_breakpoints(horizon, level_T).
PiecewiseGenerator segment_average(const DrivenHamiltonian& family, const AveragingSchedule& schedule,
                                   double level_T);

// Window means of a generic generator over the given breakpoints. `splits`
// are additional quadrature cut points (kinks of the integrand).
PiecewiseGenerator window_average(const Generator& a, std::vector<double> breakpoints,
                                  std::span<const double> splits = {});

// V(t) = e^{-iH̄_N(t−b_N)}·f_{N−1}⋯f_0 for the generator scale·gen.
class PiecewisePropagator {
 public:
  explicit PiecewisePropagator(PiecewiseGenerator gen, double scale = 1.0);

  Matrix matrix_at(double t) const;
  UnitaryMatrix at(double t) const { return UnitaryMatrix::assume_unitary(matrix_at(t)); }
  // V(b_n)
  const Matrix& prefix(std::size_t n) const { return prefix_.at(n); }
  const Matrix& factor(std::size_t n) const { return factors_.at(n); }
  const PiecewiseGenerator& generator() const { return gen_; }
  double scale() const { return scale_; }

 private:
  PiecewiseGenerator gen_;
  double scale_;
  std::vector<Eigensystem> eig_;
  std::vector<Matrix> factors_;
  std::vector<Matrix> prefix_;
};

UnitaryMatrix piecewise_propagator(const PiecewiseGenerator& gen, double t);

// Ã(t) = (H(εt) − H̄_{N_t})ε^{-1/2} and A(t) = V(t)^{-1}Ã(t)V(t).
class InteractionPicture {
 public:
  InteractionPicture(DrivenHamiltonian family, PiecewiseGenerator gen, AveragingSchedule schedule);

  HermitianOperator tilde(double t) const;
  HermitianOperator residual(double t) const;
  const PiecewisePropagator& propagator() const { return v_; }
  const AveragingSchedule& schedule() const { return schedule_; }

 private:
  DrivenHamiltonian family_;
  PiecewisePropagator v_;
  AveragingSchedule schedule_;
};

HermitianOperator interaction_residual(const DrivenHamiltonian& family, const PiecewiseGenerator& gen,
                                       const AveragingSchedule& schedule, double t);

// Levels U_0 … U_{depth−1} generated by β·Ā_k^{g} on the inner windows, with
// A_0 = A and A_k = U_{k−1}^{-1}(A_{k−1} − Ā_{k−1}^{g})U_{k−1}, and the corrector
// U_2(t) = I + iβ·U_last^{-1}K(t)U_last, K(t) = ∫₀ᵗ(A_last − Ā_last^{g}).
// K vanishes at every window boundary, so only the open window contributes.
class NestedLevels {
 public:
  NestedLevels(Generator a, const AveragingSchedule& schedule, std::span<const double> splits = {},
               int depth = 2);

  int depth() const { return static_cast<int>(levels_.size()); }
  Matrix U(int k, double t) const;
  Matrix U0(double t) const { return U(0, t); }
  Matrix U1(double t) const { return U(depth() > 1 ? 1 : 0, t); }
  Matrix K(double t) const;
  Matrix U2(double t) const;
  // A_k(t)
  HermitianOperator integrand(int k, double t) const;
  const PiecewiseGenerator& average(int k) const { return levels_.at(static_cast<std::size_t>(k)).generator(); }
  const AveragingSchedule& schedule() const { return schedule_; }

 private:
  Generator a_;
  AveragingSchedule schedule_;
  std::vector<double> splits_;
  std::vector<PiecewisePropagator> levels_;
};

NestedLevels nested_average_level(Generator a, const AveragingSchedule& schedule,
                                  std::span<const double> splits = {}, int depth = 2);

struct Reconstruction {
  StateVector psi;          // V U₀ U₁ U₂^{-1} ψ₀, normalized
  double raw_norm = 1.0;    // norm before normalization
  double defect = 0.0;      // ‖psi − ψ_oracle‖
  StateVector psi_alt;      // V U₀ U₁ (I − iβK) ψ₀ with K unconjugated, normalized
  double alt_raw_norm = 1.0;
  double alt_defect = 0.0;
  double u2_defect = 0.0;   // ‖U₂ − I‖
  StateVector oracle;
};

// Builds the whole averaging hierarchy once for the horizon and evaluates it at any t ≤ horizon.
class AveragedDynamics {
 public:
  AveragedDynamics(DrivenHamiltonian family, AveragingSchedule schedule, int depth = 2);

  Reconstruction evaluate(const StateVector& psi0, double t, const IntegratorConfig& cfg) const;
  const InteractionPicture& picture() const { return *picture_; }
  const NestedLevels& levels() const { return *levels_; }

 private:
  DrivenHamiltonian family_;
  AveragingSchedule schedule_;
  std::shared_ptr<InteractionPicture> picture_;
  std::shared_ptr<NestedLevels> levels_;
};

Reconstruction reconstruct_solution(const DrivenHamiltonian& family, const AveragingSchedule& schedule,
                                    const StateVector& psi0, double t, const IntegratorConfig& cfg = {},
                                    int depth = 2);

// ψ(t) vs V(t)·𝒯e^{-iβ∫A}ψ₀ at each checkpoint; returns the defects.
std::vector<double> interaction_picture_defects(const DrivenHamiltonian& family,
                                                const AveragingSchedule& schedule, const StateVector& psi0,
                                                std::span<const double> checkpoints, const IntegratorConfig& cfg);

// sup over t in `segment` of ‖(H(εt) − H̄_segment)·W‖ with W = diag(weight)
// (identity when absent), by dense sampling.
double averaging_deviation_sup(const DrivenHamiltonian& family, const AveragingSchedule& schedule,
                           const std::optional<RealVector>& weight = std::nullopt, std::size_t segment = 0,
                           int samples = 2001);

}  // namespace slowdrive
