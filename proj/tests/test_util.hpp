#pragma once

#include <cmath>
#include <vector>

#include "awkd/core.hpp"

namespace awkd::test {

inline TokenDistribution dist(std::vector<double> p) { return validate_distribution(p); }

/// Three-token vocabulary, token 0 safety-critical, one input, one task, one
/// safety-critical context, a confident and a hedging teacher.
inline World two_teacher_world() {
  World w;
  w.vocab = {3, {0}};
  w.inputs = {{0, {0.0}}};
  w.tasks = {{0, 1.0, {{0, 1.0}}}};
  w.contexts = {{0, {0.0}, 1.0, true}};
  w.bank = TeacherBank(2);
  w.bank.set(0, 0, {dist({0.8, 0.15, 0.05}), dist({0.4, 0.35, 0.25})});
  w.bank.set_performance(0, {0.9, 0.5});
  w.bank.set_safety_scores({0.9, 0.6});
  return w;
}

/// K=3, V=10, 8 inputs, 2 tasks, 2 contexts (context 1 safety-critical), token 0 safety-critical.
inline World toy_world(std::uint64_t seed = 7) {
  WorldGenSpec spec;
  spec.seed = seed;
  spec.safety_tokens = {0};
  spec.safety_contexts = {1};
  return generate_world(spec);
}

inline double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double e : v) s += e;
  return s;
}

}  // namespace awkd::test
