#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "awkd/core.hpp"

namespace awkd {

enum class Family { Uniform, InverseEntropy, FamilyA, FamilyB, FamilyC, Custom };

std::string_view to_string(Family f) noexcept;
/// Accepts "uniform", "inverse_entropy", "A"/"family_a", "B", "C" (case-insensitive).
Family family_from_string(std::string_view name);

enum class Scale { Token, Task, Context };
std::string_view to_string(Scale s) noexcept;

inline constexpr double kEntropyFloor = 1e-6;
inline constexpr double kVarianceFloor = 1e-6;

/// Maps a positive raw vector onto {w : sum w = 1, w_min <= w_k <= w_max} by
/// normalize-then-clamp with the clamped residual redistributed over the free
/// entries. Equivalent to finding the scale s with sum_k clamp(s * raw_k) = 1,
/// which is what is solved here (exactly, over the sorted breakpoints).
/// Throws InfeasibleBounds or ZeroMass.
WeightVector clip_normalize(std::span<const double> raw, const WeightBounds& bounds);

/// w_k proportional to 1 / max(H_k, kEntropyFloor), then clip_normalize.
WeightVector inverse_entropy_weights(std::span<const double> entropies, const WeightBounds& bounds);

/// Population variance of the entries of a probability vector.
double probability_variance(std::span<const double> p);

/// Weighted isotonic regression of `w` against the order of `scores`: after
/// the call scores[k] >= scores[j] implies w[k] >= w[j], tied scores share one
/// weight, the sum is unchanged and every entry stays within the original range.
void enforce_safety_order(WeightVector& w, std::span<const double> scores);

struct TokenQuery {
  int input = 0;
  int token = 0;
  int context = 0;
};

struct OperatorParams {
  double alpha = 1.0;          ///< entropy decay for Family A
  double temperature = 0.5;    ///< performance softmax for Family C (task)
  double loss_offset = 0.05;   ///< Family A (task): raw = 1 / (1 - perf + offset)
  double consensus_gain = 1.0; ///< Family B (task) and C (context): exp(-gain * TV)
  bool safety_adjust = true;   ///< token/context safety handling on designated sets
};

class TokenWeightOperator {
 public:
  virtual ~TokenWeightOperator() = default;
  virtual WeightVector weights(const World& world, const TokenQuery& q, const WeightBounds& b) const = 0;
  virtual Family family() const noexcept = 0;
};

class TaskWeightOperator {
 public:
  virtual ~TaskWeightOperator() = default;
  virtual WeightVector weights(const World& world, int task, const WeightBounds& b) const = 0;
  virtual Family family() const noexcept = 0;
};

class ContextWeightOperator {
 public:
  virtual ~ContextWeightOperator() = default;
  virtual WeightVector weights(const World& world, int context, const WeightBounds& b) const = 0;
  virtual Family family() const noexcept = 0;
};

using TokenOperatorPtr = std::shared_ptr<const TokenWeightOperator>;
using TaskOperatorPtr = std::shared_ptr<const TaskWeightOperator>;
using ContextOperatorPtr = std::shared_ptr<const ContextWeightOperator>;

TokenOperatorPtr make_token_operator(Family f, const OperatorParams& params = {});
TaskOperatorPtr make_task_operator(Family f, const OperatorParams& params = {});
ContextOperatorPtr make_context_operator(Family f, const OperatorParams& params = {});

// Built-in families as free functions. Token families are constant in the
// token index except on safety tokens, where raw weights are scaled by
// (1 + safety_score) and the result is made monotone in the safety order.

WeightVector token_weights_uniform(const World& world, const TokenQuery& q, const WeightBounds& b);
WeightVector token_weights_inverse_entropy(const World& world, const TokenQuery& q, const WeightBounds& b,
                                           bool safety_adjust = true);
WeightVector token_weights_family_a(const World& world, const TokenQuery& q, const WeightBounds& b,
                                    double alpha = 1.0, bool safety_adjust = true);
WeightVector token_weights_family_b(const World& world, const TokenQuery& q, const WeightBounds& b,
                                    bool safety_adjust = true);
/// Hybrid: raw_k = (1 + s_k) / (1 + H_k), safety scores used on every token.
WeightVector token_weights_family_c(const World& world, const TokenQuery& q, const WeightBounds& b,
                                    bool safety_adjust = true);

WeightVector task_weights_uniform(const World& world, int task, const WeightBounds& b);
/// raw_k = 1 / max(E_{x~D_t, c~mu} H(p_k(.|x,c)), floor).
WeightVector task_weights_inverse_entropy(const World& world, int task, const WeightBounds& b);
/// Family A: inverse task loss, raw_k = 1 / (1 - perf_k(t) + offset).
WeightVector task_weights_inverse_loss(const World& world, int task, const WeightBounds& b,
                                       double offset = 0.05);
/// Family B: agreement with the task's consensus, raw_k = exp(-gain * E TV(p_k, mean_j p_j)).
WeightVector task_weights_consensus(const World& world, int task, const WeightBounds& b,
                                    double gain = 1.0);
/// Family C: raw_k = exp(perf_k(t) / tau).
WeightVector task_weights_performance(const World& world, int task, const WeightBounds& b, double tau);

WeightVector context_weights_uniform(const World& world, int context, const WeightBounds& b);
/// raw_k = 1 / max(E_x H(p_k(.|x,c)), floor); safety handling on safety-critical contexts.
WeightVector context_weights_inverse_entropy(const World& world, int context, const WeightBounds& b,
                                             bool safety_adjust = true);
/// Family A: safety scores on safety-critical contexts, uniform elsewhere.
WeightVector context_weights_safety(const World& world, int context, const WeightBounds& b);
/// Family B: raw_k = exp(-E_x H(p_k(.|x,c))); safety handling on safety-critical contexts.
WeightVector context_weights_entropy(const World& world, int context, const WeightBounds& b,
                                     bool safety_adjust = true);
/// Family C: raw_k = exp(-gain * E_x TV(p_k, consensus)); safety handling as above.
WeightVector context_weights_distance(const World& world, int context, const WeightBounds& b,
                                      double gain = 1.0, bool safety_adjust = true);

// ---------------------------------------------------------------------------
// Conformance checking

struct EvalPoint {
  int input = 0;
  int token = 0;
  int task = 0;
  int context = 0;
};

/// Type-erased operator at any scale. Lets check_conformance accept built-in
/// families, unified operators and ad-hoc lambdas alike.
using WeightFn = std::function<WeightVector(const World&, const EvalPoint&)>;

WeightFn as_weight_fn(TokenOperatorPtr op, WeightBounds bounds);
WeightFn as_weight_fn(TaskOperatorPtr op, WeightBounds bounds);
WeightFn as_weight_fn(ContextOperatorPtr op, WeightBounds bounds);

struct AxiomResult {
  bool pass = true;
  double worst_violation = 0.0;
  std::size_t checks = 0;
  EvalPoint worst_point;

  void record(double violation, const EvalPoint& at, double tolerance);
};

struct ConformanceReport {
  Scale scale = Scale::Token;
  std::size_t samples = 0;
  AxiomResult normalization;
  AxiomResult positivity;
  AxiomResult boundedness;
  AxiomResult regularity;
  AxiomResult safety;
  double lipschitz_estimate = 0.0;

  bool all_pass() const noexcept;
  void merge(const ConformanceReport& other);
};

inline constexpr double kRegularityMaxTv = 0.01;

/// Samples n_samples evaluation points and checks normalization, positivity,
/// bounds, regularity under total-variation perturbations of the teacher
/// outputs (|dw|_inf <= L * eps, eps <= 0.01) and safety monotonicity on
/// safety tokens (token scale) / safety-critical contexts (context scale).
/// Failures are reported, never thrown.
ConformanceReport check_conformance(const WeightFn& op, Scale scale, const World& world,
                                    const WeightBounds& bounds, Sampler& sampler, std::size_t n_samples);

using GridLoss = std::function<double(std::span<const double>)>;

struct ParetoCompatRow {
  double lambda = 0.0;
  std::vector<double> minimizer;
  double loss1 = 0.0;
  double loss2 = 0.0;
  bool nondominated = true;
};

struct ParetoCompatReport {
  bool pass = true;
  std::vector<ParetoCompatRow> rows;
};

/// For each lambda, the grid minimizer of lambda*l1 + (1-lambda)*l2 (ties
/// broken towards smaller l1 then l2) must not be Pareto-dominated by any grid point.
ParetoCompatReport check_pareto_compat(std::span<const std::vector<double>> grid, const GridLoss& loss1,
                                       const GridLoss& loss2, std::span<const double> lambdas);

std::vector<std::vector<double>> make_grid_1d(double lo, double hi, double step);
std::vector<std::vector<double>> make_grid_2d(double lo, double hi, double step);

}  // namespace awkd
