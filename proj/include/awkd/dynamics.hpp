#pragma once

#include <cstdint>
#include <vector>

#include "awkd/composition.hpp"
#include "awkd/core.hpp"
#include "awkd/distill.hpp"

namespace awkd {

struct WeightUpdateConfig {
  double beta = 0.3;
  long max_iters = 10000;
  double tol = 1e-10;
  /// Scale applied to the performance feedback before the softmax.
  double gain = 1.0;
  WeightBounds bounds{0.05, 0.95, 10.0};

  void check(int teachers) const;
};

/// Performance feedback f_k(w) = -E[CE(q_w, p_k)] with q_w = sum_j w_j p_j,
/// the expectation taken over the world's sampling measure. f is linear in w,
/// f_k(w) = sum_j w_j M_jk, so M is computed once.
class FeedbackModel {
 public:
  static FeedbackModel from_world(const World& world);
  /// Every teacher scores the same: the target softmax(f) is uniform.
  static FeedbackModel constant(int teachers);

  int teachers() const noexcept { return static_cast<int>(m_.size()); }
  std::vector<double> feedback(std::span<const double> w) const;
  /// w_hat = softmax(gain * f(w)).
  std::vector<double> target(std::span<const double> w, double gain) const;
  const std::vector<std::vector<double>>& matrix() const noexcept { return m_; }

 private:
  std::vector<std::vector<double>> m_;
};

/// T(w) = clip_normalize((1 - beta) w + beta w_hat(w)).
WeightVector weight_update_T(std::span<const double> w, const WeightUpdateConfig& config, const FeedbackModel& model);

struct FixedPointTrace {
  std::vector<WeightVector> iterates;
  /// distances[n] = |w(n+1) - w(n)|_inf
  std::vector<double> distances;
  /// Largest ratio of consecutive distances above rounding level.
  double rho_hat = 0.0;
  bool converged = false;

  const WeightVector& terminal() const { return iterates.back(); }
};

/// Iterates T until a step moves less than tol or max_iters is reached; a
/// non-converged trace is returned, not thrown.
FixedPointTrace iterate_to_fixed_point(std::span<const double> w0, const WeightUpdateConfig& config,
                                       const FeedbackModel& model);

/// Random point of {w : sum w = 1, w_min <= w_k <= w_max}.
WeightVector random_feasible_weights(int teachers, const WeightBounds& bounds, Sampler& rng);

/// max over sampled feasible pairs of |T(w) - T(w')|_inf / |w - w'|_inf. Half
/// the pairs are independent draws, half are local pairs at separations
/// between 1e-3 and 1e-1.
double estimate_contraction(const WeightUpdateConfig& config, const FeedbackModel& model, std::size_t n_pairs,
                            Sampler& rng);

struct EnvelopeCheck {
  bool pass = true;
  double worst_ratio = 0.0;  ///< max_n |w(n) - w*| / (rho^n |w(0) - w*|)
};

/// |w(n) - w*|_inf <= rho^n |w(0) - w*|_inf (1 + slack) with w* the terminal iterate.
EnvelopeCheck check_geometric_envelope(const FixedPointTrace& trace, double rho, double slack = 1e-6);

struct PerturbationRow {
  double delta = 0.0;
  double distance = 0.0;
  double ratio = 0.0;
};

struct OriginFit {
  double slope = 0.0;
  double r2 = 0.0;
};

/// Least squares y = C x through the origin; r2 is centered, 1 - SS_res / SS_tot.
OriginFit fit_through_origin(std::span<const double> x, std::span<const double> y);

/// Fixed zero-sum direction with unit inf-norm, drawn once from `seed`.
std::vector<double> perturbation_direction(int teachers, std::uint64_t seed);

/// For every delta, shifts the operator's weights at every evaluation point by
/// delta * direction, solves the shifted and the clean problem full-batch to
/// gradient norm <= grad_tol and records the Euclidean logit distance. Throws
/// MarginViolated when a shifted weight leaves [w_min, w_max].
std::vector<PerturbationRow> perturbation_experiment(const UnifiedWeightOperator& op, const World& world,
                                                     std::span<const double> deltas, double ridge,
                                                     std::uint64_t seed, double grad_tol = 1e-8);

struct VarianceResult {
  double measured = 0.0;
  double base = 0.0;
  double w_min = 0.0;
  double w_max = 0.0;
  double bound = 0.0;
  std::size_t samples = 0;

  bool within_bound() const noexcept { return measured <= bound; }
};

/// Trace of the covariance of single-sample gradients at theta. A sample draws
/// (t, x, c) from the world measure and, for each token i, a teacher k with
/// probability w_k(x, i, t, c); the gradient row for x is softmax(theta_x) - p_k,i.
/// The uniform baseline reuses the same random numbers. w_min/w_max are the
/// extremes of the operator's outputs over the support. Needs n_samples >= 100.
VarianceResult gradient_variance_ratio(const UnifiedWeightOperator& op, const World& world,
                                       const StudentParams& theta, std::size_t n_samples, std::uint64_t seed);

}  // namespace awkd
