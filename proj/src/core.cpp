#include "awkd/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace awkd {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NegativeMass: return "NegativeMass";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::InfeasibleBounds: return "InfeasibleBounds";
    case ErrorCode::ZeroMass: return "ZeroMass";
    case ErrorCode::MissingScores: return "MissingScores";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MissingLogits: return "MissingLogits";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InsufficientTrace: return "InsufficientTrace";
    case ErrorCode::MarginViolated: return "MarginViolated";
    case ErrorCode::NegativeMultiplier: return "NegativeMultiplier";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::DualStall: return "DualStall";
    case ErrorCode::MissingLabel: return "MissingLabel";
    case ErrorCode::NonConformantOperator: return "NonConformantOperator";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnresolvedReference: return "UnresolvedReference";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

TokenDistribution validate_distribution(std::span<const double> p, std::size_t expected_size,
                                        const Tolerances& tol) {
  if (p.empty()) throw Error(ErrorCode::DimensionMismatch, "empty distribution");
  if (expected_size != 0 && p.size() != expected_size) {
    throw Error(ErrorCode::DimensionMismatch, "expected " + std::to_string(expected_size) +
                                                  " entries, got " + std::to_string(p.size()));
  }
  std::vector<double> out(p.begin(), p.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!std::isfinite(out[i])) {
      throw Error(ErrorCode::NotNormalized, "non-finite entry at index " + std::to_string(i));
    }
    if (out[i] < -tol.construction) {
      std::ostringstream msg;
      msg << "entry " << i << " = " << out[i];
      throw Error(ErrorCode::NegativeMass, msg.str());
    }
    if (out[i] < 0.0) out[i] = 0.0;
    sum += out[i];
  }
  if (std::abs(sum - 1.0) > tol.normalization) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "sum = " << sum;
    throw Error(ErrorCode::NotNormalized, msg.str());
  }
  return TokenDistribution(std::move(out));
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double cross_entropy(std::span<const double> q, std::span<const double> p) {
  if (q.size() != p.size()) throw Error(ErrorCode::DimensionMismatch, "cross_entropy sizes differ");
  double ce = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] <= 0.0) continue;
    if (p[i] <= 0.0) return std::numeric_limits<double>::infinity();
    ce -= q[i] * std::log(p[i]);
  }
  return ce;
}

double kl_divergence(std::span<const double> q, std::span<const double> p) {
  if (q.size() != p.size()) throw Error(ErrorCode::DimensionMismatch, "kl_divergence sizes differ");
  double kl = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] <= 0.0) continue;
    if (p[i] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += q[i] * std::log(q[i] / p[i]);
  }
  return kl;
}

double total_variation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "total_variation sizes differ");
  double tv = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(a[i] - b[i]);
  return 0.5 * tv;
}

void softmax_into(std::span<const double> logits, std::span<double> out) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    z += out[i];
  }
  for (auto& v : out) v /= z;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  softmax_into(logits, out);
  return out;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "max_abs_diff sizes differ");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

bool VocabularySpec::is_safety_token(int token) const {
  return std::find(safety_tokens.begin(), safety_tokens.end(), token) != safety_tokens.end();
}

TeacherBank::TeacherBank(int teachers) : teachers_(teachers) {
  if (teachers < 1) throw Error(ErrorCode::InvalidArgument, "need at least one teacher");
}

void TeacherBank::set(int input, int context, std::vector<TokenDistribution> dists) {
  if (static_cast<int>(dists.size()) != teachers_) {
    throw Error(ErrorCode::DimensionMismatch,
                "expected " + std::to_string(teachers_) + " teacher distributions for (input " +
                    std::to_string(input) + ", context " + std::to_string(context) + ")");
  }
  const auto v = dists.front().size();
  for (const auto& d : dists) {
    if (d.size() != v) throw Error(ErrorCode::DimensionMismatch, "teacher distributions differ in size");
  }
  table_[{input, context}] = std::move(dists);
}

bool TeacherBank::contains(int input, int context) const {
  return table_.count({input, context}) != 0;
}

const std::vector<TokenDistribution>& TeacherBank::at(int input, int context) const {
  auto it = table_.find({input, context});
  if (it == table_.end()) {
    throw Error(ErrorCode::UnresolvedReference, "no teacher outputs for (input " +
                                                    std::to_string(input) + ", context " +
                                                    std::to_string(context) + ")");
  }
  return it->second;
}

void TeacherBank::set_performance(int task, std::vector<double> scores) {
  if (static_cast<int>(scores.size()) != teachers_) {
    throw Error(ErrorCode::DimensionMismatch, "performance scores for task " + std::to_string(task) +
                                                  " need one entry per teacher");
  }
  performance_[task] = std::move(scores);
}

bool TeacherBank::has_performance(int task) const { return performance_.count(task) != 0; }

const std::vector<double>& TeacherBank::performance(int task) const {
  auto it = performance_.find(task);
  if (it == performance_.end()) {
    throw Error(ErrorCode::MissingScores, "no performance scores for task " + std::to_string(task));
  }
  return it->second;
}

void TeacherBank::set_safety_scores(std::vector<double> scores) {
  if (static_cast<int>(scores.size()) != teachers_) {
    throw Error(ErrorCode::DimensionMismatch, "safety scores need one entry per teacher");
  }
  safety_ = std::move(scores);
}

const std::vector<double>& TeacherBank::safety_scores() const {
  if (safety_.empty()) throw Error(ErrorCode::MissingScores, "no safety scores");
  return safety_;
}

bool WeightBounds::feasible(int teachers) const noexcept {
  if (!(w_min > 0.0) || !(w_min <= w_max) || !std::isfinite(w_max)) return false;
  const double k = teachers;
  return k * w_min <= 1.0 + 1e-12 && k * w_max >= 1.0 - 1e-12;
}

void WeightBounds::check_feasible(int teachers) const {
  if (feasible(teachers)) return;
  std::ostringstream msg;
  msg << "w_min=" << w_min << ", w_max=" << w_max << ", K=" << teachers;
  if (w_min > 0.0 && w_min <= w_max) {
    msg << " (K*w_min=" << teachers * w_min << ", K*w_max=" << teachers * w_max
        << "; need K*w_min <= 1 <= K*w_max)";
  } else {
    msg << " (need 0 < w_min <= w_max < inf)";
  }
  throw Error(ErrorCode::InfeasibleBounds, msg.str());
}

namespace {

template <class Seq>
std::size_t find_id(const Seq& seq, int id, const char* what) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i].id == id) return i;
  }
  throw Error(ErrorCode::UnresolvedReference, std::string("unknown ") + what + " id " + std::to_string(id));
}

}  // namespace

std::size_t World::input_index(int id) const { return find_id(inputs, id, "input"); }
std::size_t World::task_index(int id) const { return find_id(tasks, id, "task"); }
std::size_t World::context_index(int id) const { return find_id(contexts, id, "context"); }

std::vector<std::string> World::validate() const {
  std::vector<std::string> issues;
  auto issue = [&](std::string s) { issues.push_back(std::move(s)); };

  if (vocab.size < 2) issue("vocabulary size must be >= 2");
  for (int s : vocab.safety_tokens) {
    if (s < 0 || s >= vocab.size) issue("safety token " + std::to_string(s) + " outside [0, V)");
  }
  if (bank.teachers() < 1) issue("teacher bank needs K >= 1");
  if (inputs.empty()) issue("no inputs");
  if (tasks.empty()) issue("no tasks");
  if (contexts.empty()) issue("no contexts");

  std::set<int> input_ids, task_ids, context_ids;
  std::size_t feature_dim = inputs.empty() ? 0 : inputs.front().features.size();
  for (const auto& x : inputs) {
    if (!input_ids.insert(x.id).second) issue("duplicate input id " + std::to_string(x.id));
    if (x.features.size() != feature_dim) issue("input " + std::to_string(x.id) + " feature dimension differs");
  }
  for (const auto& c : contexts) {
    if (!context_ids.insert(c.id).second) issue("duplicate context id " + std::to_string(c.id));
    if (c.measure_weight < 0.0) issue("context " + std::to_string(c.id) + " has negative measure");
  }

  double lambda_sum = 0.0;
  for (const auto& t : tasks) {
    if (!task_ids.insert(t.id).second) issue("duplicate task id " + std::to_string(t.id));
    if (t.importance < 0.0) issue("task " + std::to_string(t.id) + " has negative importance");
    lambda_sum += t.importance;
    double w = 0.0;
    for (const auto& ti : t.inputs) {
      if (!input_ids.count(ti.input)) {
        issue("task " + std::to_string(t.id) + " references unknown input " + std::to_string(ti.input));
      }
      if (ti.weight < 0.0) issue("task " + std::to_string(t.id) + " has a negative sampling weight");
      w += ti.weight;
    }
    if (std::abs(w - 1.0) > tol.construction) {
      issue("task " + std::to_string(t.id) + " sampling weights sum to " + std::to_string(w));
    }
  }
  if (!tasks.empty() && std::abs(lambda_sum - 1.0) > tol.construction) {
    issue("task importances sum to " + std::to_string(lambda_sum));
  }
  double mu = 0.0;
  for (const auto& c : contexts) mu += c.measure_weight;
  if (!contexts.empty() && std::abs(mu - 1.0) > tol.construction) {
    issue("context measure weights sum to " + std::to_string(mu));
  }

  for (const auto& t : tasks) {
    for (const auto& ti : t.inputs) {
      if (!input_ids.count(ti.input)) continue;
      for (const auto& c : contexts) {
        if (!bank.contains(ti.input, c.id)) {
          issue("missing teacher outputs for (input " + std::to_string(ti.input) + ", context " +
                std::to_string(c.id) + ")");
        }
      }
    }
  }
  for (const auto& [key, dists] : bank.table()) {
    if (!input_ids.count(key.first) || !context_ids.count(key.second)) {
      issue("teacher table entry (input " + std::to_string(key.first) + ", context " +
            std::to_string(key.second) + ") references an unknown id");
    }
    for (const auto& d : dists) {
      if (static_cast<int>(d.size()) != vocab.size) {
        issue("teacher distribution size " + std::to_string(d.size()) + " != V");
        break;
      }
    }
  }
  if (bank.has_safety_scores()) {
    for (double s : bank.safety_scores()) {
      if (s < 0.0 || s > 1.0) issue("safety score outside [0, 1]");
    }
  }
  for (const auto& t : tasks) {
    if (!bank.has_performance(t.id)) continue;
    for (double s : bank.performance(t.id)) {
      if (s < 0.0 || s > 1.0) issue("performance score outside [0, 1] for task " + std::to_string(t.id));
    }
  }
  return issues;
}

void World::check() const {
  auto issues = validate();
  if (issues.empty()) return;
  std::string msg;
  for (const auto& s : issues) msg += (msg.empty() ? "" : "; ") + s;
  throw Error(ErrorCode::InvalidArgument, msg);
}

std::vector<WorldPoint> World::support() const {
  std::vector<WorldPoint> pts;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (const auto& ti : tasks[t].inputs) {
      const std::size_t x = input_index(ti.input);
      for (std::size_t c = 0; c < contexts.size(); ++c) {
        const double p = tasks[t].importance * ti.weight * contexts[c].measure_weight;
        if (p > 0.0) pts.push_back({t, x, c, p});
      }
    }
  }
  return pts;
}

std::vector<double> World::input_marginal() const {
  std::vector<double> m(inputs.size(), 0.0);
  for (const auto& t : tasks) {
    for (const auto& ti : t.inputs) m[input_index(ti.input)] += t.importance * ti.weight;
  }
  return m;
}

Sampler::Sampler(std::uint64_t seed) : engine_(seed) {}

double Sampler::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t Sampler::index(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "index(0)");
  auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
  return std::min(i, n - 1);
}

std::size_t Sampler::categorical(std::span<const double> weights) {
  if (weights.empty()) throw Error(ErrorCode::InvalidArgument, "categorical over empty weights");
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw Error(ErrorCode::ZeroMass, "categorical weights sum to zero");
  const double u = uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

double Sampler::normal() {
  // Box-Muller; one value per call keeps the stream layout trivial.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

WorldPoint Sampler::sample_point(const World& world) {
  thread_local std::vector<double> buf;
  buf.clear();
  for (const auto& t : world.tasks) buf.push_back(t.importance);
  const std::size_t t = categorical(buf);
  const auto& task = world.tasks[t];
  buf.clear();
  for (const auto& ti : task.inputs) buf.push_back(ti.weight);
  const std::size_t j = categorical(buf);
  buf.clear();
  for (const auto& c : world.contexts) buf.push_back(c.measure_weight);
  const std::size_t c = categorical(buf);
  const std::size_t x = world.input_index(task.inputs[j].input);
  return {t, x, c, task.importance * task.inputs[j].weight * world.contexts[c].measure_weight};
}

Sampler seeded_sampler(std::uint64_t seed) { return Sampler(seed); }

StudentParams StudentParams::zeros(const World& world, double ridge) {
  StudentParams p;
  p.logits.assign(world.inputs.size(), std::vector<double>(static_cast<std::size_t>(world.vocab.size), 0.0));
  p.ridge = ridge;
  return p;
}

double StudentParams::squared_norm() const {
  double s = 0.0;
  for (const auto& row : logits) {
    for (double v : row) s += v * v;
  }
  return s;
}

World generate_world(const WorldGenSpec& spec) {
  if (spec.teachers < 1 || spec.vocab < 2 || spec.inputs < 1 || spec.tasks < 1 || spec.contexts < 1) {
    throw Error(ErrorCode::InvalidArgument, "generated world dimensions must be positive (V >= 2)");
  }
  Sampler rng(spec.seed);
  World w;
  w.vocab.size = spec.vocab;
  w.vocab.safety_tokens = spec.safety_tokens;
  w.bank = TeacherBank(spec.teachers);

  for (int x = 0; x < spec.inputs; ++x) {
    InputSpec in{x, {}};
    for (int d = 0; d < spec.feature_dim; ++d) in.features.push_back(rng.normal());
    w.inputs.push_back(std::move(in));
  }
  for (int c = 0; c < spec.contexts; ++c) {
    ContextSpec ctx;
    ctx.id = c;
    for (int d = 0; d < spec.feature_dim; ++d) ctx.features.push_back(rng.normal());
    ctx.measure_weight = 1.0 / spec.contexts;
    ctx.safety_critical = std::find(spec.safety_contexts.begin(), spec.safety_contexts.end(), c) !=
                          spec.safety_contexts.end();
    w.contexts.push_back(std::move(ctx));
  }
  // Inputs are dealt round-robin to tasks, each task sampling its inputs uniformly.
  for (int t = 0; t < spec.tasks; ++t) {
    TaskSpec task;
    task.id = t;
    task.importance = 1.0 / spec.tasks;
    std::vector<int> members;
    for (int x = 0; x < spec.inputs; ++x) {
      if (x % spec.tasks == t) members.push_back(x);
    }
    if (members.empty()) members.push_back(t % spec.inputs);
    for (int x : members) task.inputs.push_back({x, 1.0 / static_cast<double>(members.size())});
    w.tasks.push_back(std::move(task));
  }

  std::vector<double> logits(static_cast<std::size_t>(spec.vocab));
  std::vector<double> probs(logits.size());
  for (int x = 0; x < spec.inputs; ++x) {
    for (int c = 0; c < spec.contexts; ++c) {
      std::vector<TokenDistribution> dists;
      for (int k = 0; k < spec.teachers; ++k) {
        for (auto& l : logits) l = spec.logit_scale * rng.normal();
        softmax_into(logits, probs);
        dists.push_back(validate_distribution(probs, logits.size(), w.tol));
      }
      w.bank.set(x, c, std::move(dists));
    }
  }
  for (int t = 0; t < spec.tasks; ++t) {
    std::vector<double> s(static_cast<std::size_t>(spec.teachers));
    for (auto& v : s) v = rng.uniform();
    w.bank.set_performance(t, std::move(s));
  }
  std::vector<double> safety(static_cast<std::size_t>(spec.teachers));
  for (auto& v : safety) v = rng.uniform();
  w.bank.set_safety_scores(std::move(safety));
  w.check();
  return w;
}

}  // namespace awkd
