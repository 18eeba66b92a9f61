#pragma once

#include <map>
#include <utility>
#include <vector>

#include "awkd/composition.hpp"
#include "awkd/core.hpp"
#include "awkd/distill.hpp"

namespace awkd {

struct SafetyConfig {
  double s_min = 0.5;
  /// (input id, context id) -> ground-truth token y*.
  std::map<std::pair<int, int>, int> labels;
  double alpha = 0.5;
  long max_dual_iters = 200;
  double grad_tol = 1e-8;
  double residual_tol = 1e-3;

  int label(int input, int context) const;
  void check() const;
};

/// p(y*) when y* is a safety token, 1 otherwise.
double safety_measure(std::span<const double> p, int label, const VocabularySpec& vocab);

/// Expectation of the safety measure of softmax(theta_x) over the world's
/// support. With critical_only, the measure is restricted to safety-critical
/// contexts and renormalized. Throws MissingLabel.
double expected_safety(const StudentParams& theta, const World& world, const SafetyConfig& safety,
                       bool critical_only = false);
LogitGradient expected_safety_gradient(const StudentParams& theta, const World& world, const SafetyConfig& safety,
                                       bool critical_only = false);
/// Same expectation with the distillation targets in place of the student.
double ensemble_safety(const TargetTable& targets, const World& world, const SafetyConfig& safety,
                       bool critical_only = false);

/// Supremum of expected_safety over all students: every input puts all mass
/// on the token with the largest safety payoff.
double max_achievable_safety(const World& world, const SafetyConfig& safety);

/// L_KD(theta) - mu * Safety(theta). Throws NegativeMultiplier.
double lagrangian_value(const StudentParams& theta, double mu, const World& world, const TargetTable& targets,
                        const SafetyConfig& safety);
LogitGradient lagrangian_gradient(const StudentParams& theta, double mu, const World& world,
                                  const TargetTable& targets, const SafetyConfig& safety);

/// Minimizes the Lagrangian in theta from `start` to gradient norm <= safety.grad_tol.
DescentResult minimize_lagrangian(double mu, const World& world, const TargetTable& targets,
                                  const SafetyConfig& safety, StudentParams start);

struct DualStep {
  long iteration = 0;
  double mu = 0.0;
  double safety = 0.0;
  double kd_loss = 0.0;
  double feasibility = 0.0;
  double slackness = 0.0;
};

struct DualResult {
  StudentParams theta;
  double mu = 0.0;
  std::vector<DualStep> history;
};

/// Alternates full minimization in theta with mu <- max(0, mu + alpha (S_min - Safety)).
/// Throws Infeasible (supremum of Safety below S_min - 1e-6) or DualStall.
DualResult dual_ascent_solve(const UnifiedWeightOperator& op, const World& world, const SafetyConfig& safety,
                             double ridge);
DualResult dual_ascent_solve(const World& world, const TargetTable& targets, const SafetyConfig& safety,
                             double ridge);

struct KktResiduals {
  double stationarity = 0.0;
  double slackness = 0.0;
  double primal = 0.0;
  double dual = 0.0;

  double max() const noexcept;
};

KktResiduals kkt_residuals(const StudentParams& theta, double mu, const World& world, const TargetTable& targets,
                           const SafetyConfig& safety);

struct ParetoPoint {
  double mu = 0.0;
  double kd_loss = 0.0;
  double safety = 0.0;
};

/// Lagrangian minimizers along an ascending nonnegative mu grid, each solve
/// warm-started from the previous one.
std::vector<ParetoPoint> pareto_sweep(const World& world, const TargetTable& targets, const SafetyConfig& safety,
                                      std::span<const double> mu_grid, double ridge);

struct MonotoneCheck {
  bool safety_nondecreasing = true;
  bool loss_nondecreasing = true;
  double worst_safety_drop = 0.0;
  double worst_loss_drop = 0.0;

  bool pass() const noexcept { return safety_nondecreasing && loss_nondecreasing; }
};

MonotoneCheck check_pareto_monotone(const std::vector<ParetoPoint>& sweep, double tol = 1e-9);

struct JensenResult {
  double student_safety = 0.0;
  double ensemble_safety = 0.0;
  bool pass = false;
};

/// Requires the context operator to pass conformance (NonConformantOperator
/// otherwise), fits an unregularized student to convergence on safety-critical
/// contexts and compares its expected safety with the ensemble targets'.
JensenResult jensen_preservation_check(const UnifiedWeightOperator& op, const World& world,
                                       const SafetyConfig& safety, std::uint64_t seed,
                                       std::size_t conformance_samples = 1000, double tol = 1e-3);

}  // namespace awkd
