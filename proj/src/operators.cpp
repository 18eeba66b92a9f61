#include "awkd/operators.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace awkd {

std::string_view to_string(Family f) noexcept {
  switch (f) {
    case Family::Uniform: return "uniform";
    case Family::InverseEntropy: return "inverse_entropy";
    case Family::FamilyA: return "A";
    case Family::FamilyB: return "B";
    case Family::FamilyC: return "C";
    case Family::Custom: return "custom";
  }
  return "custom";
}

Family family_from_string(std::string_view name) {
  std::string s;
  for (char ch : name) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  if (s == "uniform") return Family::Uniform;
  if (s == "inverse_entropy" || s == "inverseentropy") return Family::InverseEntropy;
  if (s == "a" || s == "family_a") return Family::FamilyA;
  if (s == "b" || s == "family_b") return Family::FamilyB;
  if (s == "c" || s == "family_c") return Family::FamilyC;
  throw Error(ErrorCode::InvalidArgument, "unknown operator family '" + std::string(name) + "'");
}

std::string_view to_string(Scale s) noexcept {
  switch (s) {
    case Scale::Token: return "token";
    case Scale::Task: return "task";
    case Scale::Context: return "context";
  }
  return "token";
}

WeightVector clip_normalize(std::span<const double> raw, const WeightBounds& bounds) {
  const int k = static_cast<int>(raw.size());
  if (k == 0) throw Error(ErrorCode::DimensionMismatch, "clip_normalize on empty vector");
  bounds.check_feasible(k);

  std::vector<double> r(raw.begin(), raw.end());
  double total = 0.0;
  for (auto& v : r) {
    if (!(v > 0.0)) v = 0.0;  // also maps NaN to zero mass
    total += v;
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw Error(ErrorCode::ZeroMass, "raw weights have no positive finite mass");
  }
  for (auto& v : r) v /= total;

  const double lo = bounds.w_min;
  const double hi = bounds.w_max;
  if (std::all_of(r.begin(), r.end(), [&](double v) { return v >= lo && v <= hi; })) return r;

  auto clamp_at = [&](double s, double rk) { return std::clamp(s * rk, lo, hi); };
  auto mass_at = [&](double s) {
    double m = 0.0;
    for (double rk : r) m += clamp_at(s, rk);
    return m;
  };

  std::vector<double> breaks;
  for (double rk : r) {
    if (rk > 0.0) {
      breaks.push_back(lo / rk);
      breaks.push_back(hi / rk);
    }
  }
  std::sort(breaks.begin(), breaks.end());

  // mass_at is nondecreasing and piecewise linear in s; find the segment
  // where it crosses 1 and solve the linear piece there.
  double scale = breaks.back();
  double prev = 0.0;
  for (double b : breaks) {
    if (mass_at(b) >= 1.0) {
      const double mid = 0.5 * (prev + b);
      double fixed = 0.0, free = 0.0;
      for (double rk : r) {
        const double v = mid * rk;
        if (v <= lo) fixed += lo;
        else if (v >= hi) fixed += hi;
        else free += rk;
      }
      scale = free > 0.0 ? (1.0 - fixed) / free : b;
      break;
    }
    prev = b;
  }

  WeightVector w(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) w[i] = clamp_at(scale, r[i]);
  return w;
}

WeightVector inverse_entropy_weights(std::span<const double> entropies, const WeightBounds& bounds) {
  std::vector<double> raw;
  raw.reserve(entropies.size());
  for (double h : entropies) raw.push_back(1.0 / std::max(h, kEntropyFloor));
  return clip_normalize(raw, bounds);
}

double probability_variance(std::span<const double> p) {
  if (p.empty()) return 0.0;
  const double mean = std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
  double var = 0.0;
  for (double v : p) var += (v - mean) * (v - mean);
  return var / static_cast<double>(p.size());
}

void enforce_safety_order(WeightVector& w, std::span<const double> scores) {
  if (w.size() != scores.size()) {
    throw Error(ErrorCode::DimensionMismatch, "enforce_safety_order: weights and scores differ in size");
  }
  std::vector<std::size_t> order(w.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  struct Block {
    double sum;
    double count;
    std::size_t first;
    std::size_t last;  // positions in `order`, inclusive
  };
  std::vector<Block> blocks;
  for (std::size_t pos = 0; pos < order.size();) {
    std::size_t end = pos;
    double sum = 0.0;
    while (end < order.size() && scores[order[end]] == scores[order[pos]]) sum += w[order[end++]];
    blocks.push_back({sum, static_cast<double>(end - pos), pos, end - 1});
    // Pool adjacent violators: block means must be nondecreasing in score.
    while (blocks.size() > 1) {
      auto& b = blocks[blocks.size() - 1];
      auto& a = blocks[blocks.size() - 2];
      if (a.sum / a.count <= b.sum / b.count) break;
      a.sum += b.sum;
      a.count += b.count;
      a.last = b.last;
      blocks.pop_back();
    }
    pos = end;
  }
  for (const auto& b : blocks) {
    if (b.count == 1.0) continue;
    const double mean = b.sum / b.count;
    for (std::size_t pos = b.first; pos <= b.last; ++pos) w[order[pos]] = mean;
  }
}

namespace {

std::vector<double> teacher_entropies(const std::vector<TokenDistribution>& dists) {
  std::vector<double> h;
  h.reserve(dists.size());
  for (const auto& d : dists) h.push_back(entropy(d));
  return h;
}

std::vector<double> consensus(const std::vector<TokenDistribution>& dists) {
  std::vector<double> mean(dists.front().size(), 0.0);
  const double inv = 1.0 / static_cast<double>(dists.size());
  for (const auto& d : dists) {
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += inv * d[i];
  }
  return mean;
}

bool on_safety_token(const World& world, const TokenQuery& q, bool safety_adjust) {
  return safety_adjust && world.vocab.is_safety_token(q.token);
}

// Shared tail of every adaptive family: optional (1 + s_k) scaling, the
// bounded projection, then repair of the safety order.
WeightVector finish(std::vector<double> raw, const World& world, const WeightBounds& b, bool scale_by_safety,
                    bool repair_order) {
  if (scale_by_safety) {
    const auto& s = world.bank.safety_scores();
    for (std::size_t k = 0; k < raw.size(); ++k) raw[k] *= 1.0 + s[k];
  }
  auto w = clip_normalize(raw, b);
  if (repair_order) enforce_safety_order(w, world.bank.safety_scores());
  return w;
}

/// Expectation over (x, c) of f(teacher dists) under D_t x mu.
template <class F>
std::vector<double> task_average(const World& world, int task, F&& per_teacher) {
  const auto& t = world.tasks[world.task_index(task)];
  std::vector<double> acc(static_cast<std::size_t>(world.teachers()), 0.0);
  for (const auto& ti : t.inputs) {
    for (const auto& c : world.contexts) {
      const double p = ti.weight * c.measure_weight;
      if (p <= 0.0) continue;
      const auto vals = per_teacher(world.bank.at(ti.input, c.id));
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += p * vals[k];
    }
  }
  return acc;
}

/// Expectation over inputs (marginal input distribution) for one context.
template <class F>
std::vector<double> context_average(const World& world, int context, F&& per_teacher) {
  const auto marginal = world.input_marginal();
  std::vector<double> acc(static_cast<std::size_t>(world.teachers()), 0.0);
  for (std::size_t x = 0; x < world.inputs.size(); ++x) {
    if (marginal[x] <= 0.0) continue;
    const auto vals = per_teacher(world.bank.at(world.inputs[x].id, context));
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += marginal[x] * vals[k];
  }
  return acc;
}

std::vector<double> tv_to_consensus(const std::vector<TokenDistribution>& dists) {
  const auto mean = consensus(dists);
  std::vector<double> out;
  for (const auto& d : dists) out.push_back(total_variation(d.probs(), mean));
  return out;
}

}  // namespace

WeightVector token_weights_uniform(const World& world, const TokenQuery&, const WeightBounds& b) {
  const auto k = static_cast<std::size_t>(world.teachers());
  b.check_feasible(static_cast<int>(k));
  return WeightVector(k, 1.0 / static_cast<double>(k));
}

WeightVector token_weights_inverse_entropy(const World& world, const TokenQuery& q, const WeightBounds& b,
                                           bool safety_adjust) {
  const auto h = teacher_entropies(world.bank.at(q.input, q.context));
  std::vector<double> raw;
  for (double v : h) raw.push_back(1.0 / std::max(v, kEntropyFloor));
  const bool safe = on_safety_token(world, q, safety_adjust);
  return finish(std::move(raw), world, b, safe, safe);
}

WeightVector token_weights_family_a(const World& world, const TokenQuery& q, const WeightBounds& b, double alpha,
                                    bool safety_adjust) {
  if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidArgument, "Family A needs alpha > 0");
  const auto h = teacher_entropies(world.bank.at(q.input, q.context));
  std::vector<double> raw;
  for (double v : h) raw.push_back(std::exp(-alpha * v));
  const bool safe = on_safety_token(world, q, safety_adjust);
  return finish(std::move(raw), world, b, safe, safe);
}

WeightVector token_weights_family_b(const World& world, const TokenQuery& q, const WeightBounds& b,
                                    bool safety_adjust) {
  std::vector<double> raw;
  for (const auto& d : world.bank.at(q.input, q.context)) {
    raw.push_back(1.0 / (probability_variance(d.probs()) + kVarianceFloor));
  }
  const bool safe = on_safety_token(world, q, safety_adjust);
  return finish(std::move(raw), world, b, safe, safe);
}

WeightVector token_weights_family_c(const World& world, const TokenQuery& q, const WeightBounds& b,
                                    bool safety_adjust) {
  const auto h = teacher_entropies(world.bank.at(q.input, q.context));
  const bool have_scores = world.bank.has_safety_scores();
  std::vector<double> raw;
  for (std::size_t k = 0; k < h.size(); ++k) {
    const double s = have_scores ? world.bank.safety_scores()[k] : 0.0;
    raw.push_back((1.0 + s) / (1.0 + h[k]));
  }
  const bool safe = on_safety_token(world, q, safety_adjust);
  return finish(std::move(raw), world, b, false, safe);
}

WeightVector task_weights_uniform(const World& world, int task, const WeightBounds& b) {
  world.task_index(task);
  return token_weights_uniform(world, {}, b);
}

WeightVector task_weights_inverse_entropy(const World& world, int task, const WeightBounds& b) {
  const auto h = task_average(world, task, teacher_entropies);
  return inverse_entropy_weights(h, b);
}

WeightVector task_weights_inverse_loss(const World& world, int task, const WeightBounds& b, double offset) {
  if (!(offset > 0.0)) throw Error(ErrorCode::InvalidArgument, "inverse-loss offset must be > 0");
  world.task_index(task);
  const auto& perf = world.bank.performance(task);
  std::vector<double> raw;
  for (double p : perf) raw.push_back(1.0 / (1.0 - p + offset));
  return clip_normalize(raw, b);
}

WeightVector task_weights_consensus(const World& world, int task, const WeightBounds& b, double gain) {
  const auto tv = task_average(world, task, tv_to_consensus);
  std::vector<double> raw;
  for (double d : tv) raw.push_back(std::exp(-gain * d));
  return clip_normalize(raw, b);
}

WeightVector task_weights_performance(const World& world, int task, const WeightBounds& b, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be > 0");
  world.task_index(task);
  const auto& perf = world.bank.performance(task);
  const double top = *std::max_element(perf.begin(), perf.end());
  std::vector<double> raw;
  for (double p : perf) raw.push_back(std::exp((p - top) / tau));
  return clip_normalize(raw, b);
}

WeightVector context_weights_uniform(const World& world, int context, const WeightBounds& b) {
  world.context_index(context);
  return token_weights_uniform(world, {}, b);
}

namespace {

bool critical(const World& world, int context) {
  return world.contexts[world.context_index(context)].safety_critical;
}

}  // namespace

WeightVector context_weights_inverse_entropy(const World& world, int context, const WeightBounds& b,
                                             bool safety_adjust) {
  const auto h = context_average(world, context, teacher_entropies);
  std::vector<double> raw;
  for (double v : h) raw.push_back(1.0 / std::max(v, kEntropyFloor));
  const bool safe = safety_adjust && critical(world, context);
  return finish(std::move(raw), world, b, safe, safe);
}

WeightVector context_weights_safety(const World& world, int context, const WeightBounds& b) {
  const auto k = static_cast<std::size_t>(world.teachers());
  const auto& s = world.bank.safety_scores();
  std::vector<double> raw(k, 1.0);
  if (critical(world, context)) {
    for (std::size_t i = 0; i < k; ++i) raw[i] = s[i] + kVarianceFloor;
  }
  return clip_normalize(raw, b);
}

WeightVector context_weights_entropy(const World& world, int context, const WeightBounds& b, bool safety_adjust) {
  const auto h = context_average(world, context, teacher_entropies);
  std::vector<double> raw;
  for (double v : h) raw.push_back(std::exp(-v));
  const bool safe = safety_adjust && critical(world, context);
  return finish(std::move(raw), world, b, safe, safe);
}

WeightVector context_weights_distance(const World& world, int context, const WeightBounds& b, double gain,
                                      bool safety_adjust) {
  const auto tv = context_average(world, context, tv_to_consensus);
  std::vector<double> raw;
  for (double d : tv) raw.push_back(std::exp(-gain * d));
  const bool safe = safety_adjust && critical(world, context);
  return finish(std::move(raw), world, b, safe, safe);
}

namespace {

class TokenOp final : public TokenWeightOperator {
 public:
  TokenOp(Family f, OperatorParams p) : family_(f), params_(p) {}

  WeightVector weights(const World& world, const TokenQuery& q, const WeightBounds& b) const override {
    switch (family_) {
      case Family::Uniform: return token_weights_uniform(world, q, b);
      case Family::InverseEntropy: return token_weights_inverse_entropy(world, q, b, params_.safety_adjust);
      case Family::FamilyA: return token_weights_family_a(world, q, b, params_.alpha, params_.safety_adjust);
      case Family::FamilyB: return token_weights_family_b(world, q, b, params_.safety_adjust);
      case Family::FamilyC: return token_weights_family_c(world, q, b, params_.safety_adjust);
      case Family::Custom: break;
    }
    throw Error(ErrorCode::InvalidArgument, "no built-in token operator for family custom");
  }
  Family family() const noexcept override { return family_; }

 private:
  Family family_;
  OperatorParams params_;
};

class TaskOp final : public TaskWeightOperator {
 public:
  TaskOp(Family f, OperatorParams p) : family_(f), params_(p) {}

  WeightVector weights(const World& world, int task, const WeightBounds& b) const override {
    switch (family_) {
      case Family::Uniform: return task_weights_uniform(world, task, b);
      case Family::InverseEntropy: return task_weights_inverse_entropy(world, task, b);
      case Family::FamilyA: return task_weights_inverse_loss(world, task, b, params_.loss_offset);
      case Family::FamilyB: return task_weights_consensus(world, task, b, params_.consensus_gain);
      case Family::FamilyC: return task_weights_performance(world, task, b, params_.temperature);
      case Family::Custom: break;
    }
    throw Error(ErrorCode::InvalidArgument, "no built-in task operator for family custom");
  }
  Family family() const noexcept override { return family_; }

 private:
  Family family_;
  OperatorParams params_;
};

class ContextOp final : public ContextWeightOperator {
 public:
  ContextOp(Family f, OperatorParams p) : family_(f), params_(p) {}

  WeightVector weights(const World& world, int context, const WeightBounds& b) const override {
    switch (family_) {
      case Family::Uniform: return context_weights_uniform(world, context, b);
      case Family::InverseEntropy: return context_weights_inverse_entropy(world, context, b, params_.safety_adjust);
      case Family::FamilyA: return context_weights_safety(world, context, b);
      case Family::FamilyB: return context_weights_entropy(world, context, b, params_.safety_adjust);
      case Family::FamilyC:
        return context_weights_distance(world, context, b, params_.consensus_gain, params_.safety_adjust);
      case Family::Custom: break;
    }
    throw Error(ErrorCode::InvalidArgument, "no built-in context operator for family custom");
  }
  Family family() const noexcept override { return family_; }

 private:
  Family family_;
  OperatorParams params_;
};

}  // namespace

TokenOperatorPtr make_token_operator(Family f, const OperatorParams& params) {
  if (f == Family::Custom) throw Error(ErrorCode::InvalidArgument, "custom operators are built by the caller");
  return std::make_shared<TokenOp>(f, params);
}

TaskOperatorPtr make_task_operator(Family f, const OperatorParams& params) {
  if (f == Family::Custom) throw Error(ErrorCode::InvalidArgument, "custom operators are built by the caller");
  return std::make_shared<TaskOp>(f, params);
}

ContextOperatorPtr make_context_operator(Family f, const OperatorParams& params) {
  if (f == Family::Custom) throw Error(ErrorCode::InvalidArgument, "custom operators are built by the caller");
  return std::make_shared<ContextOp>(f, params);
}

WeightFn as_weight_fn(TokenOperatorPtr op, WeightBounds bounds) {
  return [op = std::move(op), bounds](const World& w, const EvalPoint& p) {
    return op->weights(w, {p.input, p.token, p.context}, bounds);
  };
}

WeightFn as_weight_fn(TaskOperatorPtr op, WeightBounds bounds) {
  return [op = std::move(op), bounds](const World& w, const EvalPoint& p) { return op->weights(w, p.task, bounds); };
}

WeightFn as_weight_fn(ContextOperatorPtr op, WeightBounds bounds) {
  return [op = std::move(op), bounds](const World& w, const EvalPoint& p) {
    return op->weights(w, p.context, bounds);
  };
}

void AxiomResult::record(double violation, const EvalPoint& at, double tolerance) {
  ++checks;
  if (violation > worst_violation || (checks == 1 && violation > 0.0)) {
    worst_violation = violation;
    worst_point = at;
  }
  if (violation > tolerance) pass = false;
}

bool ConformanceReport::all_pass() const noexcept {
  return normalization.pass && positivity.pass && boundedness.pass && regularity.pass && safety.pass;
}

void ConformanceReport::merge(const ConformanceReport& other) {
  auto merge_one = [](AxiomResult& a, const AxiomResult& b) {
    a.pass = a.pass && b.pass;
    a.checks += b.checks;
    if (b.worst_violation > a.worst_violation) {
      a.worst_violation = b.worst_violation;
      a.worst_point = b.worst_point;
    }
  };
  samples += other.samples;
  merge_one(normalization, other.normalization);
  merge_one(positivity, other.positivity);
  merge_one(boundedness, other.boundedness);
  merge_one(regularity, other.regularity);
  merge_one(safety, other.safety);
  lipschitz_estimate = std::max(lipschitz_estimate, other.lipschitz_estimate);
}

namespace {

/// Mix every teacher distribution at (input, context) with a random
/// distribution, moving each by at most `eta` in total variation.
double perturb_teachers(World& world, int input, int context, double eta, Sampler& rng) {
  const auto& dists = world.bank.at(input, context);
  std::vector<TokenDistribution> moved;
  double eps = 0.0;
  std::vector<double> noise(dists.front().size());
  std::vector<double> mixed(noise.size());
  for (const auto& d : dists) {
    for (auto& v : noise) v = rng.normal();
    const auto r = softmax(noise);
    for (std::size_t i = 0; i < mixed.size(); ++i) mixed[i] = (1.0 - eta) * d[i] + eta * r[i];
    double s = 0.0;
    for (double v : mixed) s += v;
    for (auto& v : mixed) v /= s;
    eps = std::max(eps, total_variation(d.probs(), mixed));
    moved.push_back(validate_distribution(mixed, mixed.size(), world.tol));
  }
  world.bank.set(input, context, std::move(moved));
  return eps;
}

}  // namespace

ConformanceReport check_conformance(const WeightFn& op, Scale scale, const World& world, const WeightBounds& bounds,
                                    Sampler& sampler, std::size_t n_samples) {
  if (n_samples < 1) throw Error(ErrorCode::InvalidArgument, "n_samples must be >= 1");
  constexpr double kTol = 1e-9;
  ConformanceReport rep;
  rep.scale = scale;
  const auto& safety_tokens = world.vocab.safety_tokens;
  const bool have_scores = world.bank.has_safety_scores();

  for (std::size_t n = 0; n < n_samples; ++n) {
    const auto wp = sampler.sample_point(world);
    EvalPoint pt;
    pt.task = world.tasks[wp.task].id;
    pt.input = world.inputs[wp.input].id;
    pt.context = world.contexts[wp.context].id;
    if (!safety_tokens.empty() && sampler.uniform() < 0.5) {
      pt.token = safety_tokens[sampler.index(safety_tokens.size())];
    } else {
      pt.token = static_cast<int>(sampler.index(static_cast<std::size_t>(world.vocab.size)));
    }
    ++rep.samples;

    const auto w = op(world, pt);
    double sum = 0.0, lo = std::numeric_limits<double>::infinity(), bound_violation = 0.0;
    for (double v : w) {
      sum += v;
      lo = std::min(lo, v);
      bound_violation = std::max({bound_violation, bounds.w_min - v, v - bounds.w_max});
    }
    rep.normalization.record(std::abs(sum - 1.0), pt, kTol);
    rep.positivity.record(lo > 0.0 ? 0.0 : std::max(-lo, std::numeric_limits<double>::min()), pt, 0.0);
    rep.boundedness.record(bound_violation, pt, kTol);

    const bool safety_point = have_scores && ((scale == Scale::Token && world.vocab.is_safety_token(pt.token)) ||
                                              (scale == Scale::Context && world.contexts[wp.context].safety_critical));
    if (safety_point && w.size() == static_cast<std::size_t>(world.teachers())) {
      const auto& s = world.bank.safety_scores();
      double worst = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) {
        for (std::size_t j = 0; j < w.size(); ++j) {
          if (k != j && s[k] >= s[j]) worst = std::max(worst, w[j] - w[k]);
        }
      }
      rep.safety.record(worst, pt, kTol);
    }

    // Regularity: pick the (input, context) cell the operator reads at this scale.
    int px = pt.input, pc = pt.context;
    if (scale == Scale::Task) {
      const auto& ti = world.tasks[wp.task].inputs;
      px = ti[sampler.index(ti.size())].input;
      pc = world.contexts[sampler.index(world.contexts.size())].id;
    } else if (scale == Scale::Context) {
      const auto pick = sampler.sample_point(world);
      px = world.inputs[pick.input].id;
    }
    World moved = world;
    const double eta = kRegularityMaxTv * (1.0 - sampler.uniform());
    const double eps = perturb_teachers(moved, px, pc, eta, sampler);
    if (eps > 0.0) {
      const auto w2 = op(moved, pt);
      const double dw = w2.size() == w.size() ? max_abs_diff(w, w2) : std::numeric_limits<double>::infinity();
      rep.lipschitz_estimate = std::max(rep.lipschitz_estimate, dw / eps);
      rep.regularity.record(dw - bounds.lipschitz * eps, pt, 1e-12);
    }
  }
  return rep;
}

ParetoCompatReport check_pareto_compat(std::span<const std::vector<double>> grid, const GridLoss& loss1,
                                       const GridLoss& loss2, std::span<const double> lambdas) {
  if (grid.empty()) throw Error(ErrorCode::InvalidArgument, "empty parameter grid");
  std::vector<double> l1(grid.size()), l2(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    l1[g] = loss1(grid[g]);
    l2[g] = loss2(grid[g]);
  }
  ParetoCompatReport rep;
  for (double lambda : lambdas) {
    if (lambda < 0.0 || lambda > 1.0) throw Error(ErrorCode::InvalidArgument, "lambda outside [0, 1]");
    std::size_t best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double v = lambda * l1[g] + (1.0 - lambda) * l2[g];
      const bool tie = v == best_val && (l1[g] < l1[best] || (l1[g] == l1[best] && l2[g] < l2[best]));
      if (v < best_val || tie) {
        best_val = v;
        best = g;
      }
    }
    bool nondominated = true;
    for (std::size_t g = 0; g < grid.size() && nondominated; ++g) {
      const bool weakly = l1[g] <= l1[best] && l2[g] <= l2[best];
      const bool strictly = l1[g] < l1[best] || l2[g] < l2[best];
      if (weakly && strictly) nondominated = false;
    }
    rep.rows.push_back({lambda, grid[best], l1[best], l2[best], nondominated});
    rep.pass = rep.pass && nondominated;
  }
  return rep;
}

std::vector<std::vector<double>> make_grid_1d(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw Error(ErrorCode::InvalidArgument, "bad grid range");
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
  std::vector<std::vector<double>> g;
  g.reserve(n);
  for (std::size_t i = 0; i < n; ++i) g.push_back({lo + step * static_cast<double>(i)});
  return g;
}

std::vector<std::vector<double>> make_grid_2d(double lo, double hi, double step) {
  const auto axis = make_grid_1d(lo, hi, step);
  std::vector<std::vector<double>> g;
  g.reserve(axis.size() * axis.size());
  for (const auto& a : axis) {
    for (const auto& b : axis) g.push_back({a[0], b[0]});
  }
  return g;
}

}  // namespace awkd
