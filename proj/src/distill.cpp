#include "awkd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace awkd {

void TrainerConfig::check() const {
  if (!(eta0 > 0.0)) throw Error(ErrorCode::InvalidArgument, "eta0 must be > 0");
  if (steps < 0) throw Error(ErrorCode::InvalidArgument, "steps must be >= 0");
  if (!(ridge >= 0.0)) throw Error(ErrorCode::InvalidArgument, "ridge must be >= 0");
  if (eval_every < 1) throw Error(ErrorCode::InvalidArgument, "eval_every must be >= 1");
}

void TrainTrace::write_csv(std::ostream& out) const {
  out << "step,loss,mean_kl,grad_norm,lr\n";
  char buf[160];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g\n", r.step, r.loss, r.mean_kl, r.grad_norm, r.lr);
    out << buf;
  }
}

TargetTable TargetTable::from_points(const World& world, std::vector<TargetPoint> points) {
  TargetTable t;
  t.n_inputs_ = world.inputs.size();
  t.n_contexts_ = world.contexts.size();
  const auto v = static_cast<std::size_t>(world.vocab.size);
  t.mass_.assign(t.n_inputs_, 0.0);
  t.qbar_.assign(t.n_inputs_, std::vector<double>(v, 0.0));
  t.lookup_.assign(world.tasks.size() * t.n_inputs_ * t.n_contexts_, -1);
  for (std::size_t n = 0; n < points.size(); ++n) {
    const auto& p = points[n];
    if (p.q.size() != v) throw Error(ErrorCode::DimensionMismatch, "target length differs from vocabulary");
    t.mass_[p.input] += p.prob;
    for (std::size_t i = 0; i < v; ++i) t.qbar_[p.input][i] += p.prob * p.q[i];
    t.lookup_[(p.task * t.n_inputs_ + p.input) * t.n_contexts_ + p.context] = static_cast<long>(n);
  }
  for (std::size_t x = 0; x < t.n_inputs_; ++x) {
    if (t.mass_[x] > 0.0) {
      for (auto& q : t.qbar_[x]) q /= t.mass_[x];
    }
  }
  t.points_ = std::move(points);
  return t;
}

TargetTable TargetTable::adaptive(const World& world, const UnifiedWeightOperator& op) {
  std::vector<TargetPoint> pts;
  for (const auto& s : world.support()) {
    const auto q = op.target(world, world.inputs[s.input].id, world.tasks[s.task].id, world.contexts[s.context].id);
    pts.push_back({s.task, s.input, s.context, s.prob, {q.probs().begin(), q.probs().end()}});
  }
  return from_points(world, std::move(pts));
}

TargetTable TargetTable::classic(const World& world) {
  const auto k = static_cast<std::size_t>(world.teachers());
  const std::vector<double> w(k, 1.0 / static_cast<double>(k));
  std::vector<TargetPoint> pts;
  for (const auto& s : world.support()) {
    const auto& dists = world.bank.at(world.inputs[s.input].id, world.contexts[s.context].id);
    std::vector<double> q(static_cast<std::size_t>(world.vocab.size), 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t i = 0; i < q.size(); ++i) q[i] += w[j] * dists[j][i];
    }
    pts.push_back({s.task, s.input, s.context, s.prob, std::move(q)});
  }
  return from_points(world, std::move(pts));
}

std::size_t TargetTable::locate(const WorldPoint& p) const {
  const std::size_t key = (p.task * n_inputs_ + p.input) * n_contexts_ + p.context;
  if (key >= lookup_.size() || lookup_[key] < 0) {
    throw Error(ErrorCode::InvalidArgument, "sampled point is outside the target support");
  }
  return static_cast<std::size_t>(lookup_[key]);
}

namespace {

void check_logits(const StudentParams& theta, const World& world) {
  if (theta.logits.size() != world.inputs.size()) {
    throw Error(ErrorCode::MissingLogits, "student has " + std::to_string(theta.logits.size()) +
                                              " logit rows for " + std::to_string(world.inputs.size()) + " inputs");
  }
  for (std::size_t x = 0; x < theta.logits.size(); ++x) {
    if (theta.logits[x].size() != static_cast<std::size_t>(world.vocab.size)) {
      throw Error(ErrorCode::MissingLogits, "logit row for input " + std::to_string(world.inputs[x].id) +
                                                " has the wrong length");
    }
  }
}

double log_sum_exp(std::span<const double> v) {
  const double top = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double a : v) s += std::exp(a - top);
  return top + std::log(s);
}

/// -sum q_i log softmax(theta)_i
double ce_logits(std::span<const double> q, std::span<const double> theta) {
  const double lse = log_sum_exp(theta);
  double ce = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] > 0.0) ce -= q[i] * (theta[i] - lse);
  }
  return ce;
}

}  // namespace

double kd_loss(const StudentParams& theta, const World& world, const TargetTable& targets) {
  check_logits(theta, world);
  double loss = 0.0;
  for (const auto& p : targets.points()) loss += p.prob * ce_logits(p.q, theta.logits[p.input]);
  return loss + 0.5 * theta.ridge * theta.squared_norm();
}

double kd_loss(const StudentParams& theta, const UnifiedWeightOperator& op, const World& world) {
  return kd_loss(theta, world, TargetTable::adaptive(world, op));
}

LogitGradient kd_gradient(const StudentParams& theta, const World& world, const TargetTable& targets) {
  check_logits(theta, world);
  LogitGradient g(theta.logits.size());
  for (std::size_t x = 0; x < theta.logits.size(); ++x) {
    const auto& row = theta.logits[x];
    g[x].assign(row.size(), 0.0);
    const double a = targets.input_mass(x);
    if (a > 0.0) {
      const auto p = softmax(row);
      const auto& qbar = targets.input_target(x);
      for (std::size_t i = 0; i < row.size(); ++i) g[x][i] = a * (p[i] - qbar[i]);
    }
    for (std::size_t i = 0; i < row.size(); ++i) g[x][i] += theta.ridge * row[i];
  }
  return g;
}

LogitGradient kd_gradient(const StudentParams& theta, const UnifiedWeightOperator& op, const World& world) {
  return kd_gradient(theta, world, TargetTable::adaptive(world, op));
}

double mean_kl(const StudentParams& theta, const TargetTable& targets) {
  double kl = 0.0;
  for (std::size_t x = 0; x < targets.inputs(); ++x) {
    const double a = targets.input_mass(x);
    if (a <= 0.0) continue;
    const auto& q = targets.input_target(x);
    double h = 0.0;
    for (double v : q) {
      if (v > 0.0) h -= v * std::log(v);
    }
    kl += a * std::max(0.0, ce_logits(q, theta.logits[x]) - h);
  }
  return kl;
}

double gradient_norm(const LogitGradient& g) {
  double s = 0.0;
  for (const auto& row : g) {
    for (double v : row) s += v * v;
  }
  return std::sqrt(s);
}

namespace {

TraceRecord evaluate(const StudentParams& theta, const World& world, const TargetTable& targets, long step,
                     double lr) {
  TraceRecord r;
  r.step = step;
  r.loss = kd_loss(theta, world, targets);
  if (!std::isfinite(r.loss)) {
    throw Error(ErrorCode::NonFiniteLoss, "loss is not finite at step " + std::to_string(step));
  }
  r.mean_kl = mean_kl(theta, targets);
  r.grad_norm = gradient_norm(kd_gradient(theta, world, targets));
  r.lr = lr;
  return r;
}

/// The serial SGD recurrence; `target_at(index)` supplies the distillation
/// target for the sampled support point.
template <class TargetFn>
TrainResult sgd_loop(const TrainerConfig& config, const World& world, const TargetTable& targets,
                     TargetFn&& target_at) {
  config.check();
  Sampler rng(config.seed);
  TrainResult out;
  out.theta = StudentParams::zeros(world, config.ridge);
  auto& theta = out.theta.logits;
  const double ridge = config.ridge;
  std::vector<double> p(static_cast<std::size_t>(world.vocab.size));

  out.trace.records.push_back(evaluate(out.theta, world, targets, 0, config.eta0));
  for (long t = 0; t < config.steps; ++t) {
    const auto pt = rng.sample_point(world);
    const auto& q = target_at(targets.locate(pt));
    const double eta = config.eta0 / (1.0 + static_cast<double>(t));
    auto& row = theta[pt.input];
    softmax_into(row, p);
    if (ridge != 0.0) {
      for (std::size_t x = 0; x < theta.size(); ++x) {
        if (x == pt.input) continue;
        for (auto& v : theta[x]) v -= eta * (ridge * v);
      }
    }
    for (std::size_t i = 0; i < row.size(); ++i) row[i] -= eta * (p[i] - q[i] + ridge * row[i]);

    const long step = t + 1;
    if (step % config.eval_every == 0 || step == config.steps) {
      out.trace.records.push_back(evaluate(out.theta, world, targets, step, eta));
    }
  }
  return out;
}

}  // namespace

TrainResult sgd_train(const TrainerConfig& config, const World& world, const TargetTable& targets) {
  return sgd_loop(config, world, targets, [&](std::size_t n) -> const std::vector<double>& {
    return targets.points()[n].q;
  });
}

TrainResult sgd_train(const TrainerConfig& config, const UnifiedWeightOperator& op, const World& world) {
  return sgd_train(config, world, TargetTable::adaptive(world, op));
}

TrainResult classic_uniform_kd_train(const TrainerConfig& config, const World& world) {
  return sgd_train(config, world, TargetTable::classic(world));
}

TrainResult noisy_weight_train(const TrainerConfig& config, const UnifiedWeightOperator& op, const World& world,
                               double delta) {
  if (!(delta >= 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be >= 0");
  const auto targets = TargetTable::adaptive(world, op);
  if (delta == 0.0) return sgd_train(config, world, targets);

  const auto& b = op.bounds();
  const auto v = static_cast<std::size_t>(world.vocab.size);
  // Clean per-token weights at every support point.
  std::vector<std::vector<WeightVector>> clean;
  for (const auto& p : targets.points()) {
    std::vector<WeightVector> per_token;
    for (std::size_t i = 0; i < v; ++i) {
      auto w = op.weights(world, world.inputs[p.input].id, static_cast<int>(i), world.tasks[p.task].id,
                          world.contexts[p.context].id);
      for (double wk : w) {
        if (wk < b.w_min + delta || wk > b.w_max - delta) {
          throw Error(ErrorCode::MarginViolated, "weight " + std::to_string(wk) + " leaves [w_min + delta, w_max - delta]"
                                                 " for delta = " + std::to_string(delta));
        }
      }
      per_token.push_back(std::move(w));
    }
    clean.push_back(std::move(per_token));
  }

  Sampler noise(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const auto k = static_cast<std::size_t>(world.teachers());
  std::vector<double> u(k), q(v);
  return sgd_loop(config, world, targets, [&](std::size_t n) -> const std::vector<double>& {
    for (auto& e : u) e = 2.0 * noise.uniform() - 1.0;
    const auto& p = targets.points()[n];
    const auto& dists = world.bank.at(world.inputs[p.input].id, world.contexts[p.context].id);
    double total = 0.0;
    for (std::size_t i = 0; i < v; ++i) {
      const auto& w = clean[n][i];
      double norm = 0.0;
      for (std::size_t j = 0; j < k; ++j) norm += w[j] + delta * u[j];
      q[i] = 0.0;
      for (std::size_t j = 0; j < k; ++j) q[i] += (w[j] + delta * u[j]) / norm * dists[j][i];
      total += q[i];
    }
    for (auto& e : q) e /= total;
    return q;
  });
}

RateFit fit_convergence_rate(const TrainTrace& trace, double loss_star) {
  std::vector<double> xs, ys;
  for (const auto& r : trace.records) {
    if (r.step > 0 && r.loss > loss_star) {
      xs.push_back(std::log(static_cast<double>(r.step)));
      ys.push_back(std::log(r.loss - loss_star));
    }
  }
  if (xs.size() < 10) {
    throw Error(ErrorCode::InsufficientTrace,
                "need >= 10 records above the optimum, have " + std::to_string(xs.size()));
  }
  const std::size_t start = xs.size() / 2;
  const double n = static_cast<double>(xs.size() - start);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = start; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = start; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (!(sxx > 0.0)) throw Error(ErrorCode::InsufficientTrace, "tail records share one step");
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.constant = std::exp(my - fit.slope * mx);
  fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  fit.points = static_cast<std::size_t>(n);
  return fit;
}

TrainTrace average_traces(const std::vector<TrainTrace>& traces) {
  if (traces.empty()) throw Error(ErrorCode::InvalidArgument, "no traces to average");
  TrainTrace avg = traces.front();
  for (std::size_t s = 1; s < traces.size(); ++s) {
    const auto& t = traces[s].records;
    if (t.size() != avg.records.size()) throw Error(ErrorCode::DimensionMismatch, "traces differ in length");
    for (std::size_t r = 0; r < t.size(); ++r) {
      if (t[r].step != avg.records[r].step) throw Error(ErrorCode::DimensionMismatch, "traces differ in steps");
      avg.records[r].loss += t[r].loss;
      avg.records[r].mean_kl += t[r].mean_kl;
      avg.records[r].grad_norm += t[r].grad_norm;
    }
  }
  const double n = static_cast<double>(traces.size());
  for (auto& r : avg.records) {
    r.loss /= n;
    r.mean_kl /= n;
    r.grad_norm /= n;
  }
  return avg;
}

namespace {

double dot(const LogitGradient& a, const LogitGradient& b) {
  double s = 0.0;
  for (std::size_t x = 0; x < a.size(); ++x) {
    for (std::size_t i = 0; i < a[x].size(); ++i) s += a[x][i] * b[x][i];
  }
  return s;
}

}  // namespace

DescentResult full_batch_descent(const Objective& objective, StudentParams theta, double grad_tol, long max_iters) {
  DescentResult res;
  double f = objective.value(theta);
  auto g = objective.gradient(theta);
  double gn = gradient_norm(g);
  double step = 1.0;
  StudentParams trial = theta;
  LogitGradient prev_g;
  StudentParams prev_theta;

  for (long it = 0; it < max_iters && gn > grad_tol; ++it) {
    // Barzilai-Borwein trial step from the last accepted move.
    if (!prev_g.empty()) {
      LogitGradient s = prev_g, y = prev_g;
      for (std::size_t x = 0; x < s.size(); ++x) {
        for (std::size_t i = 0; i < s[x].size(); ++i) {
          s[x][i] = theta.logits[x][i] - prev_theta.logits[x][i];
          y[x][i] = g[x][i] - prev_g[x][i];
        }
      }
      const double sy = dot(s, y);
      if (sy > 0.0) step = dot(s, s) / sy;
    }
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t x = 0; x < theta.logits.size(); ++x) {
        for (std::size_t i = 0; i < theta.logits[x].size(); ++i) {
          trial.logits[x][i] = theta.logits[x][i] - step * g[x][i];
        }
      }
      const double ft = objective.value(trial);
      if (ft <= f - 1e-4 * step * gn * gn) {
        accepted = true;
      } else if (ft <= f + 1e-13 * std::max(1.0, std::abs(f))) {
        // Below rounding resolution of f: accept only on a smaller gradient.
        accepted = gradient_norm(objective.gradient(trial)) < gn;
      }
      if (accepted) {
        prev_theta = theta;
        prev_g = g;
        theta = trial;
        f = ft;
        g = objective.gradient(theta);
        gn = gradient_norm(g);
        break;
      }
      step *= 0.5;
    }
    ++res.iterations;
    if (!accepted) break;
  }
  res.value = f;
  res.grad_norm = gn;
  res.converged = gn <= grad_tol;
  res.theta = std::move(theta);
  return res;
}

DescentResult minimize_kd(const World& world, const TargetTable& targets, double ridge, double grad_tol,
                          long max_iters) {
  Objective obj{[&](const StudentParams& th) { return kd_loss(th, world, targets); },
                [&](const StudentParams& th) { return kd_gradient(th, world, targets); }};
  return full_batch_descent(obj, StudentParams::zeros(world, ridge), grad_tol, max_iters);
}

}  // namespace awkd
