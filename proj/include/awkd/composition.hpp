#pragma once

#include <span>
#include <vector>

#include "awkd/core.hpp"
#include "awkd/operators.hpp"

namespace awkd {

/// Product of the three scale weights divided by its sum. The product is
/// rescaled by its largest entry first so all-uniform inputs give exactly 1/K.
/// Throws DimensionMismatch or ZeroMass.
WeightVector unified_weight(std::span<const double> token, std::span<const double> task,
                            std::span<const double> context);

/// q_i = sum_k w_k p_k,i. Throws DimensionMismatch.
TokenDistribution weighted_ensemble(std::span<const double> weights, const std::vector<TokenDistribution>& dists);

struct EffectiveBounds {
  double lo = 0.0;
  double hi = 1.0;
};

/// Range of a normalized product of three vectors whose entries each lie in
/// [w_min, w_max]: [m^3 / (m^3 + (K-1) M^3), M^3 / (M^3 + (K-1) m^3)].
EffectiveBounds effective_unified_bounds(const WeightBounds& bounds, int teachers);

struct LogDecomposition {
  std::vector<double> log_token;
  std::vector<double> log_task;
  std::vector<double> log_context;
  /// log of the unnormalized product.
  std::vector<double> log_product;
};

class UnifiedWeightOperator {
 public:
  UnifiedWeightOperator(TokenOperatorPtr token, TaskOperatorPtr task, ContextOperatorPtr context,
                        WeightBounds bounds);

  /// All three scales uniform: reproduces classic uniform-weight distillation.
  static UnifiedWeightOperator uniform(WeightBounds bounds = {});

  WeightVector weights(const World& world, int input, int token, int task, int context) const;
  WeightVector weights(const World& world, const EvalPoint& p) const {
    return weights(world, p.input, p.token, p.task, p.context);
  }
  LogDecomposition log_decompose(const World& world, int input, int token, int task, int context) const;

  /// Per-token target q(.|x,t,c) with q_i = sum_k w_k(x,i,t,c) p_k,i. When
  /// the weights vary with i the vector is renormalized over tokens.
  TokenDistribution target(const World& world, int input, int task, int context) const;

  /// True when every scale is the uniform family.
  bool is_uniform() const noexcept;

  const WeightBounds& bounds() const noexcept { return bounds_; }
  EffectiveBounds effective_bounds(int teachers) const { return effective_unified_bounds(bounds_, teachers); }
  const TokenOperatorPtr& token_op() const noexcept { return token_; }
  const TaskOperatorPtr& task_op() const noexcept { return task_; }
  const ContextOperatorPtr& context_op() const noexcept { return context_; }

  WeightFn as_weight_fn() const;

 private:
  TokenOperatorPtr token_;
  TaskOperatorPtr task_;
  ContextOperatorPtr context_;
  WeightBounds bounds_;
};

}  // namespace awkd
