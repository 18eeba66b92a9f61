#include "awkd/safety.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace awkd {

int SafetyConfig::label(int input, int context) const {
  const auto it = labels.find({input, context});
  if (it == labels.end()) {
    throw Error(ErrorCode::MissingLabel,
                "no ground-truth label for input " + std::to_string(input) + ", context " + std::to_string(context));
  }
  return it->second;
}

void SafetyConfig::check() const {
  if (!(s_min > 0.0 && s_min <= 1.0)) throw Error(ErrorCode::InvalidArgument, "S_min must lie in (0, 1]");
  if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidArgument, "dual step must be > 0");
  if (max_dual_iters < 1) throw Error(ErrorCode::InvalidArgument, "max dual iterations must be >= 1");
}

double safety_measure(std::span<const double> p, int label, const VocabularySpec& vocab) {
  if (!vocab.is_safety_token(label)) return 1.0;
  if (label < 0 || static_cast<std::size_t>(label) >= p.size()) {
    throw Error(ErrorCode::DimensionMismatch, "label outside the vocabulary");
  }
  return p[static_cast<std::size_t>(label)];
}

namespace {

struct LabeledPoint {
  std::size_t input;
  double prob;
  int label;
  std::size_t target;  ///< index into the support / target table
};

std::vector<LabeledPoint> labeled_points(const World& world, const SafetyConfig& safety, bool critical_only) {
  std::vector<LabeledPoint> out;
  double total = 0.0;
  const auto support = world.support();
  for (std::size_t n = 0; n < support.size(); ++n) {
    const auto& s = support[n];
    if (critical_only && !world.contexts[s.context].safety_critical) continue;
    out.push_back({s.input, s.prob, safety.label(world.inputs[s.input].id, world.contexts[s.context].id), n});
    total += s.prob;
  }
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "no support points carry safety labels");
  if (critical_only) {
    for (auto& p : out) p.prob /= total;
  }
  return out;
}

}  // namespace

double expected_safety(const StudentParams& theta, const World& world, const SafetyConfig& safety,
                       bool critical_only) {
  double s = 0.0;
  for (const auto& p : labeled_points(world, safety, critical_only)) {
    if (!world.vocab.is_safety_token(p.label)) {
      s += p.prob;
      continue;
    }
    s += p.prob * softmax(theta.logits.at(p.input))[static_cast<std::size_t>(p.label)];
  }
  return s;
}

LogitGradient expected_safety_gradient(const StudentParams& theta, const World& world, const SafetyConfig& safety,
                                       bool critical_only) {
  LogitGradient g(theta.logits.size());
  for (std::size_t x = 0; x < g.size(); ++x) g[x].assign(theta.logits[x].size(), 0.0);
  for (const auto& p : labeled_points(world, safety, critical_only)) {
    if (!world.vocab.is_safety_token(p.label)) continue;
    const auto probs = softmax(theta.logits.at(p.input));
    const auto y = static_cast<std::size_t>(p.label);
    // d p_y / d theta_j = p_y (1[j = y] - p_j)
    for (std::size_t j = 0; j < probs.size(); ++j) {
      g[p.input][j] += p.prob * probs[y] * ((j == y ? 1.0 : 0.0) - probs[j]);
    }
  }
  return g;
}

double ensemble_safety(const TargetTable& targets, const World& world, const SafetyConfig& safety,
                       bool critical_only) {
  double s = 0.0;
  for (const auto& p : labeled_points(world, safety, critical_only)) {
    s += p.prob * safety_measure(targets.points().at(p.target).q, p.label, world.vocab);
  }
  return s;
}

double max_achievable_safety(const World& world, const SafetyConfig& safety) {
  const auto v = static_cast<std::size_t>(world.vocab.size);
  std::vector<std::vector<double>> payoff(world.inputs.size(), std::vector<double>(v, 0.0));
  double fixed = 0.0;
  for (const auto& p : labeled_points(world, safety, false)) {
    if (world.vocab.is_safety_token(p.label)) {
      payoff[p.input][static_cast<std::size_t>(p.label)] += p.prob;
    } else {
      fixed += p.prob;
    }
  }
  double best = fixed;
  for (const auto& row : payoff) best += *std::max_element(row.begin(), row.end());
  return best;
}

double lagrangian_value(const StudentParams& theta, double mu, const World& world, const TargetTable& targets,
                        const SafetyConfig& safety) {
  if (mu < 0.0) throw Error(ErrorCode::NegativeMultiplier, "mu = " + std::to_string(mu));
  return kd_loss(theta, world, targets) - mu * expected_safety(theta, world, safety);
}

LogitGradient lagrangian_gradient(const StudentParams& theta, double mu, const World& world,
                                  const TargetTable& targets, const SafetyConfig& safety) {
  auto g = kd_gradient(theta, world, targets);
  if (mu != 0.0) {
    const auto gs = expected_safety_gradient(theta, world, safety);
    for (std::size_t x = 0; x < g.size(); ++x) {
      for (std::size_t i = 0; i < g[x].size(); ++i) g[x][i] -= mu * gs[x][i];
    }
  }
  return g;
}

DescentResult minimize_lagrangian(double mu, const World& world, const TargetTable& targets,
                                  const SafetyConfig& safety, StudentParams start) {
  Objective obj{[&](const StudentParams& th) { return lagrangian_value(th, mu, world, targets, safety); },
                [&](const StudentParams& th) { return lagrangian_gradient(th, mu, world, targets, safety); }};
  return full_batch_descent(obj, std::move(start), safety.grad_tol);
}

DualResult dual_ascent_solve(const World& world, const TargetTable& targets, const SafetyConfig& safety,
                             double ridge) {
  safety.check();
  const double sup = max_achievable_safety(world, safety);
  if (sup < safety.s_min - 1e-6) {
    throw Error(ErrorCode::Infeasible, "largest achievable safety " + std::to_string(sup) + " is below S_min " +
                                           std::to_string(safety.s_min));
  }
  DualResult res;
  res.theta = StudentParams::zeros(world, ridge);
  for (long it = 0; it < safety.max_dual_iters; ++it) {
    res.theta = minimize_lagrangian(res.mu, world, targets, safety, std::move(res.theta)).theta;
    const double s = expected_safety(res.theta, world, safety);
    DualStep step;
    step.iteration = it;
    step.mu = res.mu;
    step.safety = s;
    step.kd_loss = kd_loss(res.theta, world, targets);
    step.feasibility = std::max(0.0, safety.s_min - s);
    step.slackness = std::abs(res.mu * (s - safety.s_min));
    res.history.push_back(step);
    if (step.feasibility <= safety.residual_tol && step.slackness <= safety.residual_tol) return res;
    res.mu = std::max(0.0, res.mu + safety.alpha * (safety.s_min - s));
  }
  throw Error(ErrorCode::DualStall, "no KKT point within " + std::to_string(safety.max_dual_iters) +
                                        " dual iterations (mu = " + std::to_string(res.mu) + ")");
}

DualResult dual_ascent_solve(const UnifiedWeightOperator& op, const World& world, const SafetyConfig& safety,
                             double ridge) {
  return dual_ascent_solve(world, TargetTable::adaptive(world, op), safety, ridge);
}

double KktResiduals::max() const noexcept { return std::max({stationarity, slackness, primal, dual}); }

KktResiduals kkt_residuals(const StudentParams& theta, double mu, const World& world, const TargetTable& targets,
                           const SafetyConfig& safety) {
  KktResiduals r;
  auto g = kd_gradient(theta, world, targets);
  const auto gs = expected_safety_gradient(theta, world, safety);
  for (std::size_t x = 0; x < g.size(); ++x) {
    for (std::size_t i = 0; i < g[x].size(); ++i) g[x][i] -= mu * gs[x][i];
  }
  r.stationarity = gradient_norm(g);
  const double s = expected_safety(theta, world, safety);
  r.slackness = std::abs(mu * (s - safety.s_min));
  r.primal = std::max(0.0, safety.s_min - s);
  r.dual = std::max(0.0, -mu);
  return r;
}

std::vector<ParetoPoint> pareto_sweep(const World& world, const TargetTable& targets, const SafetyConfig& safety,
                                      std::span<const double> mu_grid, double ridge) {
  std::vector<ParetoPoint> out;
  StudentParams theta = StudentParams::zeros(world, ridge);
  double prev = 0.0;
  for (double mu : mu_grid) {
    if (mu < 0.0) throw Error(ErrorCode::NegativeMultiplier, "mu grid must be nonnegative");
    if (mu < prev) throw Error(ErrorCode::InvalidArgument, "mu grid must be ascending");
    prev = mu;
    theta = minimize_lagrangian(mu, world, targets, safety, std::move(theta)).theta;
    out.push_back({mu, kd_loss(theta, world, targets), expected_safety(theta, world, safety)});
  }
  return out;
}

MonotoneCheck check_pareto_monotone(const std::vector<ParetoPoint>& sweep, double tol) {
  MonotoneCheck c;
  for (std::size_t n = 1; n < sweep.size(); ++n) {
    const double ds = sweep[n - 1].safety - sweep[n].safety;
    const double dl = sweep[n - 1].kd_loss - sweep[n].kd_loss;
    c.worst_safety_drop = std::max(c.worst_safety_drop, ds);
    c.worst_loss_drop = std::max(c.worst_loss_drop, dl);
    if (ds > tol) c.safety_nondecreasing = false;
    if (dl > tol) c.loss_nondecreasing = false;
  }
  return c;
}

JensenResult jensen_preservation_check(const UnifiedWeightOperator& op, const World& world,
                                       const SafetyConfig& safety, std::uint64_t seed,
                                       std::size_t conformance_samples, double tol) {
  Sampler rng(seed);
  const auto report = check_conformance(as_weight_fn(op.context_op(), op.bounds()), Scale::Context, world,
                                        op.bounds(), rng, conformance_samples);
  if (!report.all_pass()) {
    throw Error(ErrorCode::NonConformantOperator, "context operator fails conformance (safety worst violation " +
                                                      std::to_string(report.safety.worst_violation) + ")");
  }
  const auto full = TargetTable::adaptive(world, op);
  std::vector<TargetPoint> critical;
  double mass = 0.0;
  for (const auto& p : full.points()) {
    if (world.contexts[p.context].safety_critical) {
      critical.push_back(p);
      mass += p.prob;
    }
  }
  if (critical.empty()) throw Error(ErrorCode::InvalidArgument, "world has no safety-critical context");
  for (auto& p : critical) p.prob /= mass;
  const auto targets = TargetTable::from_points(world, std::move(critical));

  JensenResult res;
  const auto fit = minimize_kd(world, targets, 0.0, 1e-10);
  res.student_safety = expected_safety(fit.theta, world, safety, true);
  res.ensemble_safety = ensemble_safety(full, world, safety, true);
  res.pass = res.student_safety >= res.ensemble_safety - tol;
  return res;
}

}  // namespace awkd
