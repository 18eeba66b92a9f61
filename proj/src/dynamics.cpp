#include "awkd/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace awkd {

void WeightUpdateConfig::check(int teachers) const {
  if (!(beta > 0.0 && beta <= 1.0)) throw Error(ErrorCode::InvalidArgument, "beta must lie in (0, 1]");
  if (max_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_iters must be >= 1");
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be > 0");
  bounds.check_feasible(teachers);
}

FeedbackModel FeedbackModel::from_world(const World& world) {
  const auto k = static_cast<std::size_t>(world.teachers());
  FeedbackModel fm;
  fm.m_.assign(k, std::vector<double>(k, 0.0));
  for (const auto& s : world.support()) {
    const auto& dists = world.bank.at(world.inputs[s.input].id, world.contexts[s.context].id);
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t l = 0; l < k; ++l) fm.m_[j][l] -= s.prob * cross_entropy(dists[j].probs(), dists[l].probs());
    }
  }
  for (const auto& row : fm.m_) {
    for (double v : row) {
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::NonFiniteLoss, "teacher cross-entropy is infinite (disjoint supports)");
      }
    }
  }
  return fm;
}

FeedbackModel FeedbackModel::constant(int teachers) {
  FeedbackModel fm;
  fm.m_.assign(static_cast<std::size_t>(teachers), std::vector<double>(static_cast<std::size_t>(teachers), -1.0));
  return fm;
}

std::vector<double> FeedbackModel::feedback(std::span<const double> w) const {
  if (w.size() != m_.size()) throw Error(ErrorCode::DimensionMismatch, "weight length differs from teacher count");
  std::vector<double> f(m_.size(), 0.0);
  for (std::size_t j = 0; j < m_.size(); ++j) {
    for (std::size_t l = 0; l < m_.size(); ++l) f[l] += w[j] * m_[j][l];
  }
  return f;
}

std::vector<double> FeedbackModel::target(std::span<const double> w, double gain) const {
  auto f = feedback(w);
  for (auto& v : f) v *= gain;
  return softmax(f);
}

WeightVector weight_update_T(std::span<const double> w, const WeightUpdateConfig& config, const FeedbackModel& model) {
  config.check(model.teachers());
  const auto target = model.target(w, config.gain);
  std::vector<double> mixed(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) mixed[k] = (1.0 - config.beta) * w[k] + config.beta * target[k];
  return clip_normalize(mixed, config.bounds);
}

FixedPointTrace iterate_to_fixed_point(std::span<const double> w0, const WeightUpdateConfig& config,
                                       const FeedbackModel& model) {
  FixedPointTrace tr;
  tr.iterates.emplace_back(w0.begin(), w0.end());
  for (long n = 0; n < config.max_iters; ++n) {
    auto next = weight_update_T(tr.iterates.back(), config, model);
    const double d = max_abs_diff(next, tr.iterates.back());
    tr.iterates.push_back(std::move(next));
    tr.distances.push_back(d);
    if (d <= config.tol) {
      tr.converged = true;
      break;
    }
  }
  constexpr double kFloor = 1e-13;
  for (std::size_t n = 1; n < tr.distances.size(); ++n) {
    if (tr.distances[n - 1] > kFloor && tr.distances[n] > kFloor) {
      tr.rho_hat = std::max(tr.rho_hat, tr.distances[n] / tr.distances[n - 1]);
    }
  }
  return tr;
}

WeightVector random_feasible_weights(int teachers, const WeightBounds& bounds, Sampler& rng) {
  std::vector<double> raw(static_cast<std::size_t>(teachers));
  for (auto& v : raw) v = std::exp(2.0 * rng.normal());
  return clip_normalize(raw, bounds);
}

double estimate_contraction(const WeightUpdateConfig& config, const FeedbackModel& model, std::size_t n_pairs,
                            Sampler& rng) {
  if (n_pairs < 1) throw Error(ErrorCode::InvalidArgument, "n_pairs must be >= 1");
  const int k = model.teachers();
  double rho = 0.0;
  for (std::size_t n = 0; n < n_pairs; ++n) {
    const auto a = random_feasible_weights(k, config.bounds, rng);
    WeightVector b;
    if (n % 2 == 0) {
      b = random_feasible_weights(k, config.bounds, rng);
    } else {
      const double scale = std::pow(10.0, -3.0 + 2.0 * rng.uniform());
      std::vector<double> moved(a);
      for (auto& v : moved) v = std::max(v + scale * rng.normal(), 1e-12);
      b = clip_normalize(moved, config.bounds);
    }
    const double d = max_abs_diff(a, b);
    if (d < 1e-9) continue;
    rho = std::max(rho, max_abs_diff(weight_update_T(a, config, model), weight_update_T(b, config, model)) / d);
  }
  return rho;
}

EnvelopeCheck check_geometric_envelope(const FixedPointTrace& trace, double rho, double slack) {
  EnvelopeCheck out;
  const auto& star = trace.terminal();
  const double d0 = max_abs_diff(trace.iterates.front(), star);
  double scale = 1.0;
  for (std::size_t n = 0; n < trace.iterates.size(); ++n) {
    const double dn = max_abs_diff(trace.iterates[n], star);
    const double allowed = scale * d0;
    if (dn > 0.0) {
      const double ratio = allowed > 0.0 ? dn / allowed : std::numeric_limits<double>::infinity();
      out.worst_ratio = std::max(out.worst_ratio, ratio);
      if (dn > allowed * (1.0 + slack)) out.pass = false;
    }
    scale *= rho;
  }
  return out;
}

OriginFit fit_through_origin(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) throw Error(ErrorCode::DimensionMismatch, "fit needs paired samples");
  double sxy = 0.0, sxx = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += x[i] * y[i];
    sxx += x[i] * x[i];
    mean += y[i];
  }
  if (!(sxx > 0.0)) throw Error(ErrorCode::InvalidArgument, "fit needs a nonzero regressor");
  mean /= static_cast<double>(y.size());
  OriginFit fit;
  fit.slope = sxy / sxx;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - fit.slope * x[i];
    ss_res += r * r;
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  return fit;
}

std::vector<double> perturbation_direction(int teachers, std::uint64_t seed) {
  if (teachers < 2) throw Error(ErrorCode::InvalidArgument, "a zero-sum direction needs K >= 2");
  Sampler rng(seed);
  std::vector<double> d(static_cast<std::size_t>(teachers));
  double top = 0.0;
  while (!(top > 0.0)) {
    double mean = 0.0;
    for (auto& v : d) {
      v = rng.normal();
      mean += v;
    }
    mean /= static_cast<double>(d.size());
    top = 0.0;
    for (auto& v : d) {
      v -= mean;
      top = std::max(top, std::abs(v));
    }
  }
  for (auto& v : d) v /= top;
  return d;
}

namespace {

TargetTable shifted_targets(const UnifiedWeightOperator& op, const World& world, std::span<const double> dir,
                            double delta) {
  const auto& b = op.bounds();
  const auto v = static_cast<std::size_t>(world.vocab.size);
  std::vector<TargetPoint> pts;
  for (const auto& s : world.support()) {
    const int x = world.inputs[s.input].id;
    const int t = world.tasks[s.task].id;
    const int c = world.contexts[s.context].id;
    const auto& dists = world.bank.at(x, c);
    std::vector<double> q(v, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < v; ++i) {
      auto w = op.weights(world, x, static_cast<int>(i), t, c);
      double sum = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) {
        w[k] += delta * dir[k];
        if (w[k] < b.w_min || w[k] > b.w_max) {
          throw Error(ErrorCode::MarginViolated, "shifted weight " + std::to_string(w[k]) + " leaves [" +
                                                     std::to_string(b.w_min) + ", " + std::to_string(b.w_max) +
                                                     "] at delta = " + std::to_string(delta));
        }
        sum += w[k];
      }
      for (std::size_t k = 0; k < w.size(); ++k) q[i] += w[k] / sum * dists[k][i];
      total += q[i];
    }
    for (auto& e : q) e /= total;
    pts.push_back({s.task, s.input, s.context, s.prob, std::move(q)});
  }
  return TargetTable::from_points(world, std::move(pts));
}

std::size_t inverse_cdf(std::span<const double> w, double u) {
  double acc = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    acc += w[j];
    if (u < acc) return j;
  }
  return w.size() - 1;
}

double logit_distance(const StudentParams& a, const StudentParams& b) {
  double s = 0.0;
  for (std::size_t x = 0; x < a.logits.size(); ++x) {
    for (std::size_t i = 0; i < a.logits[x].size(); ++i) {
      const double d = a.logits[x][i] - b.logits[x][i];
      s += d * d;
    }
  }
  return std::sqrt(s);
}

}  // namespace

std::vector<PerturbationRow> perturbation_experiment(const UnifiedWeightOperator& op, const World& world,
                                                     std::span<const double> deltas, double ridge,
                                                     std::uint64_t seed, double grad_tol) {
  const auto dir = perturbation_direction(world.teachers(), seed);
  const auto clean = minimize_kd(world, shifted_targets(op, world, dir, 0.0), ridge, grad_tol);
  if (!clean.converged) throw Error(ErrorCode::NonFiniteLoss, "clean problem did not reach the gradient tolerance");
  std::vector<PerturbationRow> rows;
  for (double delta : deltas) {
    if (!(delta >= 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be >= 0");
    const auto moved = minimize_kd(world, shifted_targets(op, world, dir, delta), ridge, grad_tol);
    if (!moved.converged) {
      throw Error(ErrorCode::NonFiniteLoss, "perturbed problem did not reach the gradient tolerance");
    }
    const double dist = logit_distance(clean.theta, moved.theta);
    rows.push_back({delta, dist, delta > 0.0 ? dist / delta : 0.0});
  }
  return rows;
}

VarianceResult gradient_variance_ratio(const UnifiedWeightOperator& op, const World& world,
                                       const StudentParams& theta, std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 100) throw Error(ErrorCode::InvalidArgument, "n_samples must be >= 100");
  if (theta.logits.size() != world.inputs.size()) throw Error(ErrorCode::MissingLogits, "student/world mismatch");
  const auto v = static_cast<std::size_t>(world.vocab.size);
  const auto k = static_cast<std::size_t>(world.teachers());
  const auto support = world.support();
  const auto targets = TargetTable::from_points(world, [&] {
    std::vector<TargetPoint> pts;
    for (const auto& s : support) pts.push_back({s.task, s.input, s.context, s.prob, std::vector<double>(v, 0.0)});
    return pts;
  }());

  VarianceResult res;
  res.w_min = std::numeric_limits<double>::infinity();
  res.w_max = 0.0;
  std::vector<std::vector<WeightVector>> table;
  for (const auto& s : support) {
    std::vector<WeightVector> per_token;
    for (std::size_t i = 0; i < v; ++i) {
      auto w = op.weights(world, world.inputs[s.input].id, static_cast<int>(i), world.tasks[s.task].id,
                          world.contexts[s.context].id);
      for (double e : w) {
        res.w_min = std::min(res.w_min, e);
        res.w_max = std::max(res.w_max, e);
      }
      per_token.push_back(std::move(w));
    }
    table.push_back(std::move(per_token));
  }

  const std::vector<double> uniform_w(k, 1.0 / static_cast<double>(k));
  std::vector<std::vector<double>> probs;
  for (const auto& row : theta.logits) probs.push_back(softmax(row));

  const std::size_t dims = world.inputs.size() * v;
  std::vector<double> sum_a(dims, 0.0), sq_a(dims, 0.0), sum_u(dims, 0.0), sq_u(dims, 0.0);
  Sampler rng(seed);
  for (std::size_t n = 0; n < n_samples; ++n) {
    const auto pt = rng.sample_point(world);
    const std::size_t idx = targets.locate(pt);
    const auto& dists = world.bank.at(world.inputs[pt.input].id, world.contexts[pt.context].id);
    for (std::size_t i = 0; i < v; ++i) {
      const double u = rng.uniform();
      const auto& w = table[idx][i];
      const std::size_t ka = inverse_cdf(w, u);
      const std::size_t ku = inverse_cdf(uniform_w, u);
      const double ga = probs[pt.input][i] - dists[ka][i];
      const double gu = probs[pt.input][i] - dists[ku][i];
      const std::size_t d = pt.input * v + i;
      sum_a[d] += ga;
      sq_a[d] += ga * ga;
      sum_u[d] += gu;
      sq_u[d] += gu * gu;
    }
  }
  const double nn = static_cast<double>(n_samples);
  for (std::size_t d = 0; d < dims; ++d) {
    res.measured += sq_a[d] / nn - (sum_a[d] / nn) * (sum_a[d] / nn);
    res.base += sq_u[d] / nn - (sum_u[d] / nn) * (sum_u[d] / nn);
  }
  res.samples = n_samples;
  const double r = res.w_max / res.w_min;
  res.bound = r * r * res.base;
  return res;
}

}  // namespace awkd
