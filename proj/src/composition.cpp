#include "awkd/composition.hpp"

#include <algorithm>
#include <cmath>

namespace awkd {

WeightVector unified_weight(std::span<const double> token, std::span<const double> task,
                            std::span<const double> context) {
  if (token.size() != task.size() || token.size() != context.size() || token.empty()) {
    throw Error(ErrorCode::DimensionMismatch, "scale weight vectors differ in length");
  }
  WeightVector w(token.size());
  double top = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = token[k] * task[k] * context[k];
    top = std::max(top, w[k]);
  }
  if (!(top > 0.0) || !std::isfinite(top)) throw Error(ErrorCode::ZeroMass, "weight product has no positive mass");
  double sum = 0.0;
  for (auto& v : w) {
    v /= top;
    sum += v;
  }
  for (auto& v : w) v /= sum;
  return w;
}

TokenDistribution weighted_ensemble(std::span<const double> weights, const std::vector<TokenDistribution>& dists) {
  if (weights.size() != dists.size() || dists.empty()) {
    throw Error(ErrorCode::DimensionMismatch, "weights and teacher count differ");
  }
  const std::size_t v = dists.front().size();
  std::vector<double> q(v, 0.0);
  for (std::size_t k = 0; k < dists.size(); ++k) {
    if (dists[k].size() != v) throw Error(ErrorCode::DimensionMismatch, "teacher vocabularies differ");
    for (std::size_t i = 0; i < v; ++i) q[i] += weights[k] * dists[k][i];
  }
  return validate_distribution(q, v);
}

EffectiveBounds effective_unified_bounds(const WeightBounds& bounds, int teachers) {
  bounds.check_feasible(teachers);
  const double m3 = bounds.w_min * bounds.w_min * bounds.w_min;
  const double big3 = bounds.w_max * bounds.w_max * bounds.w_max;
  const double rest = static_cast<double>(teachers - 1);
  return {m3 / (m3 + rest * big3), big3 / (big3 + rest * m3)};
}

UnifiedWeightOperator::UnifiedWeightOperator(TokenOperatorPtr token, TaskOperatorPtr task,
                                             ContextOperatorPtr context, WeightBounds bounds)
    : token_(std::move(token)), task_(std::move(task)), context_(std::move(context)), bounds_(bounds) {
  if (!token_ || !task_ || !context_) throw Error(ErrorCode::InvalidArgument, "null scale operator");
}

UnifiedWeightOperator UnifiedWeightOperator::uniform(WeightBounds bounds) {
  return {make_token_operator(Family::Uniform), make_task_operator(Family::Uniform),
          make_context_operator(Family::Uniform), bounds};
}

bool UnifiedWeightOperator::is_uniform() const noexcept {
  return token_->family() == Family::Uniform && task_->family() == Family::Uniform &&
         context_->family() == Family::Uniform;
}

WeightVector UnifiedWeightOperator::weights(const World& world, int input, int token, int task, int context) const {
  const auto wt = token_->weights(world, {input, token, context}, bounds_);
  const auto ws = task_->weights(world, task, bounds_);
  const auto wc = context_->weights(world, context, bounds_);
  return unified_weight(wt, ws, wc);
}

LogDecomposition UnifiedWeightOperator::log_decompose(const World& world, int input, int token, int task,
                                                      int context) const {
  const auto wt = token_->weights(world, {input, token, context}, bounds_);
  const auto ws = task_->weights(world, task, bounds_);
  const auto wc = context_->weights(world, context, bounds_);
  LogDecomposition d;
  for (std::size_t k = 0; k < wt.size(); ++k) {
    d.log_token.push_back(std::log(wt[k]));
    d.log_task.push_back(std::log(ws[k]));
    d.log_context.push_back(std::log(wc[k]));
    d.log_product.push_back(std::log(wt[k] * ws[k] * wc[k]));
  }
  return d;
}

TokenDistribution UnifiedWeightOperator::target(const World& world, int input, int task, int context) const {
  const auto& dists = world.bank.at(input, context);
  const auto& safe = world.vocab.safety_tokens;
  int plain = 0;
  while (plain < world.vocab.size && world.vocab.is_safety_token(plain)) ++plain;
  const auto base = weights(world, input, plain < world.vocab.size ? plain : 0, task, context);
  if (safe.empty()) return weighted_ensemble(base, dists);

  std::vector<double> q(static_cast<std::size_t>(world.vocab.size), 0.0);
  bool varies = false;
  for (int i = 0; i < world.vocab.size; ++i) {
    WeightVector w = base;
    if (world.vocab.is_safety_token(i)) {
      w = weights(world, input, i, task, context);
      varies = varies || w != base;
    }
    for (std::size_t k = 0; k < dists.size(); ++k) q[static_cast<std::size_t>(i)] += w[k] * dists[k][static_cast<std::size_t>(i)];
  }
  if (!varies) return weighted_ensemble(base, dists);
  double sum = 0.0;
  for (double v : q) sum += v;
  for (auto& v : q) v /= sum;
  return validate_distribution(q, q.size(), world.tol);
}

WeightFn UnifiedWeightOperator::as_weight_fn() const {
  return [self = *this](const World& w, const EvalPoint& p) { return self.weights(w, p); };
}

}  // namespace awkd
