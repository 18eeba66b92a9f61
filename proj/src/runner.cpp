#include "awkd/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <set>
#include <sstream>

namespace awkd {

using nlohmann::json;

std::string_view to_string(ExperimentKind k) noexcept {
  switch (k) {
    case ExperimentKind::Conformance: return "conformance";
    case ExperimentKind::Train: return "train";
    case ExperimentKind::Rate: return "rate";
    case ExperimentKind::FixedPoint: return "fixed_point";
    case ExperimentKind::Perturbation: return "perturbation";
    case ExperimentKind::Variance: return "variance";
    case ExperimentKind::Safety: return "safety";
    case ExperimentKind::Pareto: return "pareto";
    case ExperimentKind::AppendixA: return "appendix_a";
  }
  return "conformance";
}

const std::vector<ExperimentKind>& all_kinds() {
  static const std::vector<ExperimentKind> kinds{
      ExperimentKind::Conformance, ExperimentKind::Train,    ExperimentKind::Rate,
      ExperimentKind::FixedPoint,  ExperimentKind::Perturbation, ExperimentKind::Variance,
      ExperimentKind::Safety,      ExperimentKind::Pareto,   ExperimentKind::AppendixA};
  return kinds;
}

ExperimentKind kind_from_string(std::string_view name) {
  for (auto k : all_kinds()) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorCode::ParseError, "unknown experiment kind '" + std::string(name) + "'");
}

UnifiedWeightOperator ExperimentConfig::unified() const {
  return {make_token_operator(token.family, token.params), make_task_operator(task.family, task.params),
          make_context_operator(context.family, context.params), bounds};
}

namespace {

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

}  // namespace

ConfigError::ConfigError(ErrorCode code, std::vector<std::string> issues)
    : Error(code, join(issues, "; ")), issues_(std::move(issues)) {}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

class Parser {
 public:
  void fail(ErrorCode code, std::string msg) { issues_.emplace_back(code, std::move(msg)); }
  bool ok() const noexcept { return issues_.empty(); }

  [[noreturn]] void raise() const {
    std::vector<std::string> msgs;
    for (const auto& [code, msg] : issues_) msgs.push_back(std::string(to_string(code)) + ": " + msg);
    throw ConfigError(issues_.front().first, std::move(msgs));
  }

  const json* member(const json& obj, const char* key, const std::string& path) {
    if (!obj.is_object()) {
      fail(ErrorCode::ParseError, path + " must be an object");
      return nullptr;
    }
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
  }

  double number(const json& obj, const char* key, double fallback, const std::string& path) {
    const json* v = member(obj, key, path);
    if (!v) return fallback;
    if (!v->is_number()) {
      fail(ErrorCode::ParseError, path + "." + key + " must be a number");
      return fallback;
    }
    return v->get<double>();
  }

  long integer(const json& obj, const char* key, long fallback, const std::string& path) {
    const json* v = member(obj, key, path);
    if (!v) return fallback;
    if (!v->is_number_integer()) {
      fail(ErrorCode::ParseError, path + "." + key + " must be an integer");
      return fallback;
    }
    return v->get<long>();
  }

  bool boolean(const json& obj, const char* key, bool fallback, const std::string& path) {
    const json* v = member(obj, key, path);
    if (!v) return fallback;
    if (!v->is_boolean()) {
      fail(ErrorCode::ParseError, path + "." + key + " must be true or false");
      return fallback;
    }
    return v->get<bool>();
  }

  std::vector<double> numbers(const json& v, const std::string& path) {
    std::vector<double> out;
    if (!v.is_array()) {
      fail(ErrorCode::ParseError, path + " must be an array of numbers");
      return out;
    }
    for (const auto& e : v) {
      if (!e.is_number()) {
        fail(ErrorCode::ParseError, path + " must contain only numbers");
        return {};
      }
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::vector<double> numbers(const json& obj, const char* key, std::vector<double> fallback,
                              const std::string& path) {
    const json* v = member(obj, key, path);
    return v ? numbers(*v, path + "." + key) : fallback;
  }

  std::vector<int> integers(const json& obj, const char* key, const std::string& path) {
    std::vector<int> out;
    const json* v = member(obj, key, path);
    if (!v) return out;
    if (!v->is_array()) {
      fail(ErrorCode::ParseError, path + "." + key + " must be an array of integers");
      return out;
    }
    for (const auto& e : *v) {
      if (!e.is_number_integer()) {
        fail(ErrorCode::ParseError, path + "." + key + " must contain only integers");
        return {};
      }
      out.push_back(e.get<int>());
    }
    return out;
  }

  const json& array(const json& obj, const char* key, const std::string& path) {
    static const json empty = json::array();
    const json* v = member(obj, key, path);
    if (!v) {
      fail(ErrorCode::ParseError, path + "." + key + " is required");
      return empty;
    }
    if (!v->is_array()) {
      fail(ErrorCode::ParseError, path + "." + key + " must be an array");
      return empty;
    }
    return *v;
  }

 private:
  std::vector<std::pair<ErrorCode, std::string>> issues_;
};

World parse_generated_world(Parser& p, const json& g, const Tolerances& tol) {
  WorldGenSpec spec;
  const std::string path = "world.generate";
  spec.teachers = static_cast<int>(p.integer(g, "teachers", spec.teachers, path));
  spec.vocab = static_cast<int>(p.integer(g, "vocab", spec.vocab, path));
  spec.inputs = static_cast<int>(p.integer(g, "inputs", spec.inputs, path));
  spec.tasks = static_cast<int>(p.integer(g, "tasks", spec.tasks, path));
  spec.contexts = static_cast<int>(p.integer(g, "contexts", spec.contexts, path));
  spec.safety_tokens = p.integers(g, "safety_tokens", path);
  spec.safety_contexts = p.integers(g, "safety_contexts", path);
  spec.logit_scale = p.number(g, "logit_scale", spec.logit_scale, path);
  spec.feature_dim = static_cast<int>(p.integer(g, "feature_dim", spec.feature_dim, path));
  spec.seed = static_cast<std::uint64_t>(p.integer(g, "seed", 0, path));
  for (int c : spec.safety_contexts) {
    if (c < 0 || c >= spec.contexts) {
      p.fail(ErrorCode::UnresolvedReference, path + ".safety_contexts references unknown context " + std::to_string(c));
    }
  }
  if (!p.ok()) return {};
  try {
    World w = generate_world(spec);
    w.tol = tol;
    return w;
  } catch (const Error& e) {
    p.fail(ErrorCode::ParseError, e.what());
    return {};
  }
}

World parse_explicit_world(Parser& p, const json& j, const Tolerances& tol) {
  World w;
  w.tol = tol;
  if (const json* v = p.member(j, "vocab", "world")) {
    w.vocab.size = static_cast<int>(p.integer(*v, "size", 0, "world.vocab"));
    w.vocab.safety_tokens = p.integers(*v, "safety_tokens", "world.vocab");
  } else {
    p.fail(ErrorCode::ParseError, "world.vocab is required");
  }

  for (const auto& in : p.array(j, "inputs", "world")) {
    InputSpec x;
    x.id = static_cast<int>(p.integer(in, "id", 0, "world.inputs[]"));
    x.features = p.numbers(in, "features", {}, "world.inputs[]");
    w.inputs.push_back(std::move(x));
  }
  for (const auto& t : p.array(j, "tasks", "world")) {
    TaskSpec task;
    task.id = static_cast<int>(p.integer(t, "id", 0, "world.tasks[]"));
    task.importance = p.number(t, "importance", 0.0, "world.tasks[]");
    for (const auto& ti : p.array(t, "inputs", "world.tasks[]")) {
      task.inputs.push_back({static_cast<int>(p.integer(ti, "input", 0, "world.tasks[].inputs[]")),
                             p.number(ti, "weight", 0.0, "world.tasks[].inputs[]")});
    }
    w.tasks.push_back(std::move(task));
  }
  for (const auto& c : p.array(j, "contexts", "world")) {
    ContextSpec ctx;
    ctx.id = static_cast<int>(p.integer(c, "id", 0, "world.contexts[]"));
    ctx.features = p.numbers(c, "features", {}, "world.contexts[]");
    ctx.measure_weight = p.number(c, "measure_weight", 0.0, "world.contexts[]");
    ctx.safety_critical = p.boolean(c, "safety_critical", false, "world.contexts[]");
    w.contexts.push_back(std::move(ctx));
  }

  std::vector<std::string> teacher_ids;
  std::vector<double> safety;
  std::map<int, std::vector<double>> perf;
  std::set<int> task_ids;
  for (const auto& t : w.tasks) task_ids.insert(t.id);
  const auto& teachers = p.array(j, "teachers", "world");
  std::size_t with_safety = 0;
  for (std::size_t k = 0; k < teachers.size(); ++k) {
    const auto& t = teachers[k];
    const json* id = p.member(t, "id", "world.teachers[]");
    if (!id || !id->is_string()) {
      p.fail(ErrorCode::ParseError, "world.teachers[" + std::to_string(k) + "].id must be a string");
      teacher_ids.push_back("#" + std::to_string(k));
    } else {
      if (std::find(teacher_ids.begin(), teacher_ids.end(), id->get<std::string>()) != teacher_ids.end()) {
        p.fail(ErrorCode::ParseError, "duplicate teacher id '" + id->get<std::string>() + "'");
      }
      teacher_ids.push_back(id->get<std::string>());
    }
    if (p.member(t, "safety", "world.teachers[]")) {
      ++with_safety;
      safety.push_back(p.number(t, "safety", 0.0, "world.teachers[]"));
    }
    if (const json* pf = p.member(t, "performance", "world.teachers[]")) {
      if (!pf->is_array()) {
        p.fail(ErrorCode::ParseError, "world.teachers[].performance must be an array");
        continue;
      }
      for (const auto& e : *pf) {
        const int task = static_cast<int>(p.integer(e, "task", 0, "world.teachers[].performance[]"));
        if (!task_ids.count(task)) {
          p.fail(ErrorCode::UnresolvedReference,
                 "teacher '" + teacher_ids.back() + "' scores unknown task " + std::to_string(task));
          continue;
        }
        auto& row = perf[task];
        row.resize(teachers.size(), std::nan(""));
        row[k] = p.number(e, "score", 0.0, "world.teachers[].performance[]");
      }
    }
  }
  const auto k_count = static_cast<int>(teachers.size());
  w.bank = TeacherBank(k_count);
  if (with_safety == teachers.size() && !teachers.empty()) {
    w.bank.set_safety_scores(safety);
  } else if (with_safety != 0) {
    p.fail(ErrorCode::ParseError, "safety scores must be given for every teacher or none");
  }
  for (auto& [task, row] : perf) {
    if (std::any_of(row.begin(), row.end(), [](double v) { return std::isnan(v); })) {
      p.fail(ErrorCode::ParseError, "task " + std::to_string(task) + " lacks a performance score for some teacher");
      continue;
    }
    w.bank.set_performance(task, row);
  }

  std::set<int> input_ids, context_ids;
  for (const auto& x : w.inputs) input_ids.insert(x.id);
  for (const auto& c : w.contexts) context_ids.insert(c.id);
  for (const auto& entry : p.array(j, "table", "world")) {
    const int x = static_cast<int>(p.integer(entry, "input", 0, "world.table[]"));
    const int c = static_cast<int>(p.integer(entry, "context", 0, "world.table[]"));
    const std::string where = "(input " + std::to_string(x) + ", context " + std::to_string(c) + ")";
    if (!input_ids.count(x)) p.fail(ErrorCode::UnresolvedReference, "table entry " + where + ": unknown input");
    if (!context_ids.count(c)) p.fail(ErrorCode::UnresolvedReference, "table entry " + where + ": unknown context");
    const json* dists = p.member(entry, "dists", "world.table[]");
    if (!dists || !dists->is_object()) {
      p.fail(ErrorCode::ParseError, "table entry " + where + ": dists must map teacher ids to distributions");
      continue;
    }
    for (const auto& [name, _] : dists->items()) {
      if (std::find(teacher_ids.begin(), teacher_ids.end(), name) == teacher_ids.end()) {
        p.fail(ErrorCode::UnresolvedReference, "table entry " + where + " references unknown teacher '" + name + "'");
      }
    }
    std::vector<TokenDistribution> row;
    bool complete = true;
    for (const auto& id : teacher_ids) {
      const auto it = dists->find(id);
      if (it == dists->end()) {
        p.fail(ErrorCode::UnresolvedReference, "table entry " + where + " has no distribution for teacher '" + id + "'");
        complete = false;
        continue;
      }
      const auto probs = p.numbers(*it, "world.table[].dists." + id);
      try {
        row.push_back(validate_distribution(probs, static_cast<std::size_t>(std::max(w.vocab.size, 0)), tol));
      } catch (const Error& e) {
        p.fail(ErrorCode::ParseError, "table entry " + where + ", teacher '" + id + "': " + e.what());
        complete = false;
      }
    }
    if (complete && !row.empty()) w.bank.set(x, c, std::move(row));
  }
  return w;
}

ScaleSelection parse_scale(Parser& p, const json& ops, const char* key) {
  ScaleSelection s;
  const std::string path = std::string("operators.") + key;
  const json* v = p.member(ops, key, "operators");
  if (!v) return s;
  if (const json* f = p.member(*v, "family", path)) {
    if (!f->is_string()) {
      p.fail(ErrorCode::ParseError, path + ".family must be a string");
    } else {
      try {
        s.family = family_from_string(f->get<std::string>());
        if (s.family == Family::Custom) p.fail(ErrorCode::ParseError, path + ": custom operators cannot be configured");
      } catch (const Error& e) {
        p.fail(ErrorCode::ParseError, path + ": " + e.what());
      }
    }
  }
  s.params.alpha = p.number(*v, "alpha", s.params.alpha, path);
  s.params.temperature = p.number(*v, "temperature", s.params.temperature, path);
  s.params.loss_offset = p.number(*v, "loss_offset", s.params.loss_offset, path);
  s.params.consensus_gain = p.number(*v, "consensus_gain", s.params.consensus_gain, path);
  s.params.safety_adjust = p.boolean(*v, "safety_adjust", s.params.safety_adjust, path);
  if (!(s.params.alpha > 0.0)) p.fail(ErrorCode::ParseError, path + ".alpha must be > 0");
  if (!(s.params.temperature > 0.0)) p.fail(ErrorCode::ParseError, path + ".temperature must be > 0");
  return s;
}

std::vector<Family> parse_families(Parser& p, const json& obj, std::vector<Family> fallback) {
  const json* v = p.member(obj, "families", "params");
  if (!v) return fallback;
  std::vector<Family> out;
  if (!v->is_array()) {
    p.fail(ErrorCode::ParseError, "params.families must be an array of names");
    return fallback;
  }
  for (const auto& e : *v) {
    try {
      out.push_back(family_from_string(e.is_string() ? e.get<std::string>() : std::string("?")));
    } catch (const Error& err) {
      p.fail(ErrorCode::ParseError, std::string("params.families: ") + err.what());
    }
  }
  return out;
}

KindParams parse_params(Parser& p, const json& j) {
  KindParams k;
  const std::string path = "params";
  k.samples = static_cast<std::size_t>(p.integer(j, "samples", static_cast<long>(k.samples), path));
  k.families = parse_families(p, j, k.families);
  k.time_limit = p.number(j, "time_limit", k.time_limit, path);
  k.seeds = static_cast<int>(p.integer(j, "seeds", k.seeds, path));
  k.kl_max = p.number(j, "kl_max", k.kl_max, path);
  k.slope_lo = p.number(j, "slope_lo", k.slope_lo, path);
  k.slope_hi = p.number(j, "slope_hi", k.slope_hi, path);
  k.fd_tol = p.number(j, "fd_tol", k.fd_tol, path);
  k.fd_draws = static_cast<int>(p.integer(j, "fd_draws", k.fd_draws, path));
  k.slope_agreement = p.number(j, "slope_agreement", k.slope_agreement, path);
  k.beta = p.number(j, "beta", k.beta, path);
  k.gain = p.number(j, "gain", k.gain, path);
  k.tol = p.number(j, "tol", k.tol, path);
  k.max_iters = p.integer(j, "max_iters", k.max_iters, path);
  k.starts = static_cast<int>(p.integer(j, "starts", k.starts, path));
  k.pairs = static_cast<std::size_t>(p.integer(j, "pairs", static_cast<long>(k.pairs), path));
  k.uniqueness_tol = p.number(j, "uniqueness_tol", k.uniqueness_tol, path);
  k.control_tol = p.number(j, "control_tol", k.control_tol, path);
  k.deltas = p.numbers(j, "deltas", k.deltas, path);
  k.r2_min = p.number(j, "r2_min", k.r2_min, path);
  k.ratio_max = p.number(j, "ratio_max", k.ratio_max, path);
  k.variance_samples =
      static_cast<std::size_t>(p.integer(j, "variance_samples", static_cast<long>(k.variance_samples), path));
  k.equality_tol = p.number(j, "equality_tol", k.equality_tol, path);
  if (p.member(j, "s_min_inactive", path)) k.s_min_inactive = p.number(j, "s_min_inactive", 0.0, path);
  k.kkt_tol = p.number(j, "kkt_tol", k.kkt_tol, path);
  k.jensen_tol = p.number(j, "jensen_tol", k.jensen_tol, path);
  k.mu_grid = p.numbers(j, "mu_grid", k.mu_grid, path);
  k.entropies = p.numbers(j, "entropies", k.entropies, path);
  k.expected_weights = p.numbers(j, "expected_weights", k.expected_weights, path);
  k.weight_tol = p.number(j, "weight_tol", k.weight_tol, path);
  k.expected_uniform = p.numbers(j, "expected_uniform", k.expected_uniform, path);
  k.expected_adaptive = p.numbers(j, "expected_adaptive", k.expected_adaptive, path);
  k.reported_adaptive = p.numbers(j, "reported_adaptive", k.reported_adaptive, path);
  k.adaptive_tol = p.number(j, "adaptive_tol", k.adaptive_tol, path);
  k.reported_tol = p.number(j, "reported_tol", k.reported_tol, path);
  k.min_gain = p.number(j, "min_gain", k.min_gain, path);
  k.min_family_gap = p.number(j, "min_family_gap", k.min_family_gap, path);
  if (k.samples < 1) p.fail(ErrorCode::ParseError, "params.samples must be >= 1");
  if (k.seeds < 1) p.fail(ErrorCode::ParseError, "params.seeds must be >= 1");
  if (k.variance_samples < 100) p.fail(ErrorCode::ParseError, "params.variance_samples must be >= 100");
  if (!(k.beta > 0.0 && k.beta <= 1.0)) p.fail(ErrorCode::ParseError, "params.beta must lie in (0, 1]");
  return k;
}

void parse_safety(Parser& p, const json& s, ExperimentConfig& cfg) {
  const std::string path = "safety";
  auto& sc = cfg.safety;
  sc.s_min = p.number(s, "s_min", sc.s_min, path);
  sc.alpha = p.number(s, "alpha", sc.alpha, path);
  sc.max_dual_iters = p.integer(s, "max_dual_iters", sc.max_dual_iters, path);
  sc.grad_tol = p.number(s, "grad_tol", sc.grad_tol, path);
  sc.residual_tol = p.number(s, "residual_tol", sc.residual_tol, path);
  if (!(sc.s_min > 0.0 && sc.s_min <= 1.0)) p.fail(ErrorCode::ParseError, "safety.s_min must lie in (0, 1]");
  if (!(sc.alpha > 0.0)) p.fail(ErrorCode::ParseError, "safety.alpha must be > 0");

  const auto& w = cfg.world;
  std::set<int> inputs, contexts;
  for (const auto& x : w.inputs) inputs.insert(x.id);
  for (const auto& c : w.contexts) contexts.insert(c.id);
  auto token_ok = [&](long t, const std::string& where) {
    if (t < 0 || t >= w.vocab.size) {
      p.fail(ErrorCode::ParseError, where + ": label token " + std::to_string(t) + " outside the vocabulary");
      return false;
    }
    return true;
  };
  if (const json* labels = p.member(s, "labels", path)) {
    if (!labels->is_array()) {
      p.fail(ErrorCode::ParseError, "safety.labels must be an array");
    } else {
      for (const auto& e : *labels) {
        const int x = static_cast<int>(p.integer(e, "input", 0, "safety.labels[]"));
        const int c = static_cast<int>(p.integer(e, "context", 0, "safety.labels[]"));
        const long t = p.integer(e, "token", 0, "safety.labels[]");
        if (!inputs.count(x)) p.fail(ErrorCode::UnresolvedReference, "safety label references unknown input " + std::to_string(x));
        if (!contexts.count(c)) {
          p.fail(ErrorCode::UnresolvedReference, "safety label references unknown context " + std::to_string(c));
        }
        if (token_ok(t, "safety.labels[]")) sc.labels[{x, c}] = static_cast<int>(t);
      }
    }
  }
  if (p.member(s, "default_label", path)) {
    const long t = p.integer(s, "default_label", 0, path);
    if (token_ok(t, "safety.default_label")) {
      for (const auto& x : w.inputs) {
        for (const auto& c : w.contexts) sc.labels.emplace(std::make_pair(x.id, c.id), static_cast<int>(t));
      }
    }
  }
}

ErrorCode classify_world_issue(const std::string& issue) {
  if (issue.find("unknown") != std::string::npos || issue.find("missing") != std::string::npos) {
    return ErrorCode::UnresolvedReference;
  }
  return ErrorCode::ParseError;
}

}  // namespace

ExperimentConfig parse_config_text(std::string_view text, std::optional<std::uint64_t> seed_override) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(ErrorCode::ParseError, {std::string("ParseError: ") + e.what()});
  }
  Parser p;
  if (!j.is_object()) {
    p.fail(ErrorCode::ParseError, "config must be a JSON object");
    p.raise();
  }
  if (seed_override) j["seed"] = *seed_override;

  ExperimentConfig cfg;
  cfg.hash = fnv1a_hex(j.dump());

  if (const json* k = p.member(j, "kind", "config"); k && k->is_string()) {
    try {
      cfg.kind = kind_from_string(k->get<std::string>());
    } catch (const Error& e) {
      p.fail(ErrorCode::ParseError, e.what());
    }
  } else {
    p.fail(ErrorCode::ParseError, "config.kind is required and must be a string");
  }
  cfg.seed = static_cast<std::uint64_t>(p.integer(j, "seed", 0, "config"));
  if (const json* o = p.member(j, "output", "config")) {
    if (o->is_string()) cfg.output = o->get<std::string>();
    else p.fail(ErrorCode::ParseError, "config.output must be a string");
  }

  Tolerances tol;
  if (const json* t = p.member(j, "tolerances", "config")) {
    tol.construction = p.number(*t, "construction", tol.construction, "tolerances");
    tol.normalization = p.number(*t, "normalization", tol.normalization, "tolerances");
  }

  if (const json* w = p.member(j, "world", "config")) {
    if (const json* g = p.member(*w, "generate", "world")) {
      cfg.world = parse_generated_world(p, *g, tol);
    } else {
      cfg.world = parse_explicit_world(p, *w, tol);
    }
  } else {
    p.fail(ErrorCode::ParseError, "config.world is required");
  }
  if (p.ok()) {
    for (const auto& issue : cfg.world.validate()) p.fail(classify_world_issue(issue), "world: " + issue);
  }

  cfg.bounds = WeightBounds{0.05, 0.95, 10.0};
  if (const json* b = p.member(j, "bounds", "config")) {
    cfg.bounds.w_min = p.number(*b, "w_min", cfg.bounds.w_min, "bounds");
    cfg.bounds.w_max = p.number(*b, "w_max", cfg.bounds.w_max, "bounds");
    cfg.bounds.lipschitz = p.number(*b, "lipschitz", cfg.bounds.lipschitz, "bounds");
  }
  if (!(cfg.bounds.lipschitz > 0.0)) p.fail(ErrorCode::ParseError, "bounds.lipschitz must be > 0");
  if (cfg.world.teachers() > 0) {
    try {
      cfg.bounds.check_feasible(cfg.world.teachers());
    } catch (const Error& e) {
      p.fail(ErrorCode::InfeasibleBounds, std::string("bounds: ") + e.what());
    }
  }

  if (const json* ops = p.member(j, "operators", "config")) {
    cfg.token = parse_scale(p, *ops, "token");
    cfg.task = parse_scale(p, *ops, "task");
    cfg.context = parse_scale(p, *ops, "context");
  }

  cfg.trainer.seed = cfg.seed;
  if (const json* t = p.member(j, "trainer", "config")) {
    cfg.trainer.eta0 = p.number(*t, "eta0", cfg.trainer.eta0, "trainer");
    cfg.trainer.steps = p.integer(*t, "steps", cfg.trainer.steps, "trainer");
    cfg.trainer.ridge = p.number(*t, "ridge", cfg.trainer.ridge, "trainer");
    cfg.trainer.eval_every = p.integer(*t, "eval_every", cfg.trainer.eval_every, "trainer");
    try {
      cfg.trainer.check();
    } catch (const Error& e) {
      p.fail(ErrorCode::ParseError, std::string("trainer: ") + e.what());
    }
  }

  if (const json* s = p.member(j, "safety", "config")) {
    cfg.has_safety = true;
    if (p.ok()) parse_safety(p, *s, cfg);
  }
  if (const json* k = p.member(j, "params", "config")) cfg.params = parse_params(p, *k);

  if (p.ok()) {
    const bool needs_safety = cfg.kind == ExperimentKind::Safety || cfg.kind == ExperimentKind::Pareto;
    if (needs_safety && !cfg.has_safety) {
      p.fail(ErrorCode::ParseError, "kind " + std::string(to_string(cfg.kind)) + " needs a safety section");
    }
    if (cfg.has_safety) {
      for (const auto& s : cfg.world.support()) {
        const int x = cfg.world.inputs[s.input].id;
        const int c = cfg.world.contexts[s.context].id;
        if (!cfg.safety.labels.count({x, c})) {
          p.fail(ErrorCode::UnresolvedReference,
                 "no safety label for (input " + std::to_string(x) + ", context " + std::to_string(c) + ")");
        }
      }
    }
    const bool uses_scores = cfg.token.family != Family::Uniform || cfg.context.family != Family::Uniform ||
                             cfg.kind == ExperimentKind::Conformance || cfg.kind == ExperimentKind::Variance;
    if (uses_scores && !cfg.world.bank.has_safety_scores()) {
      p.fail(ErrorCode::ParseError, "teachers need safety scores for the selected operators");
    }
  }
  if (!p.ok()) p.raise();
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), seed_override);
}

// ---------------------------------------------------------------------------
// Records

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool RunRecord::all_pass() const noexcept {
  return std::all_of(assertions.begin(), assertions.end(), [](const Assertion& a) { return a.pass; });
}

const Assertion& RunRecord::assertion(std::string_view name) const {
  for (const auto& a : assertions) {
    if (a.name == name) return a;
  }
  throw Error(ErrorCode::InvalidArgument, "no assertion named " + std::string(name));
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Long-format (experiment, parameter, value) table.
struct LongTable {
  std::vector<Table>* tables;
  std::size_t index;
  std::string experiment;
  void add(const std::string& parameter, double value) {
    (*tables)[index].rows.push_back({experiment, parameter, format_double(value)});
  }
};

class Recorder {
 public:
  explicit Recorder(RunRecord& r) : rec_(r) {}

  void le(const std::string& name, double measured, double limit, std::string detail = {}) {
    rec_.assertions.push_back({name, limit, measured, 0.0, measured <= limit, std::move(detail)});
  }
  void ge(const std::string& name, double measured, double limit, std::string detail = {}) {
    rec_.assertions.push_back({name, limit, measured, 0.0, measured >= limit, std::move(detail)});
  }
  void near(const std::string& name, double measured, double expected, double tol, std::string detail = {}) {
    rec_.assertions.push_back({name, expected, measured, tol, std::abs(measured - expected) <= tol, std::move(detail)});
  }
  void within(const std::string& name, double measured, double lo, double hi, std::string detail = {}) {
    rec_.assertions.push_back(
        {name, 0.5 * (lo + hi), measured, 0.5 * (hi - lo), measured >= lo && measured <= hi, std::move(detail)});
  }
  void truth(const std::string& name, bool value, std::string detail = {}) {
    rec_.assertions.push_back({name, 1.0, value ? 1.0 : 0.0, 0.0, value, std::move(detail)});
  }

  Table& table(std::string name, std::vector<std::string> columns) {
    rec_.tables.push_back({std::move(name), std::move(columns), {}});
    return rec_.tables.back();
  }
  LongTable long_table(std::string name, std::string experiment) {
    table(std::move(name), {"experiment", "parameter", "value"});
    return {&rec_.tables, rec_.tables.size() - 1, std::move(experiment)};
  }

 private:
  RunRecord& rec_;
};


double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string describe_point(const EvalPoint& p) {
  return "(input " + std::to_string(p.input) + ", token " + std::to_string(p.token) + ", task " +
         std::to_string(p.task) + ", context " + std::to_string(p.context) + ")";
}

std::string conformance_detail(const ConformanceReport& r) {
  std::vector<std::string> failed;
  auto add = [&](const char* name, const AxiomResult& a) {
    if (!a.pass) {
      failed.push_back(std::string(name) + " worst violation " + format_double(a.worst_violation) + " at " +
                       describe_point(a.worst_point));
    }
  };
  add("normalization", r.normalization);
  add("positivity", r.positivity);
  add("boundedness", r.boundedness);
  add("regularity", r.regularity);
  add("safety", r.safety);
  return join(failed, "; ");
}

UnifiedWeightOperator single_family(Family f, const WeightBounds& b) {
  return {make_token_operator(f), make_task_operator(f), make_context_operator(f), b};
}

void add_runtime(Recorder& rec, const std::string& name, double seconds, double limit) {
  if (limit > 0.0) rec.le(name, seconds, limit, "seconds");
}

// --- conformance ------------------------------------------------------------

void run_conformance(const ExperimentConfig& cfg, RunRecord& record) {
  Recorder rec(record);
  const auto t0 = std::chrono::steady_clock::now();
  const auto& w = cfg.world;
  const auto& b = cfg.bounds;
  auto& tab = rec.table("conformance", {"family", "scale", "samples", "normalization", "positivity", "boundedness",
                                        "regularity", "safety", "worst_normalization", "worst_boundedness",
                                        "worst_regularity", "worst_safety", "lipschitz_estimate"});
  Sampler rng(cfg.seed);
  const std::array<Scale, 3> scales{Scale::Token, Scale::Task, Scale::Context};
  for (Family f : cfg.params.families) {
    const OperatorParams* params[3] = {&cfg.token.params, &cfg.task.params, &cfg.context.params};
    for (Scale s : scales) {
      const auto& prm = *params[static_cast<int>(s)];
      WeightFn fn = s == Scale::Token  ? as_weight_fn(make_token_operator(f, prm), b)
                    : s == Scale::Task ? as_weight_fn(make_task_operator(f, prm), b)
                                       : as_weight_fn(make_context_operator(f, prm), b);
      const auto r = check_conformance(fn, s, w, b, rng, cfg.params.samples);
      auto flag = [](const AxiomResult& a) { return std::string(a.pass ? "pass" : "fail"); };
      tab.rows.push_back({std::string(to_string(f)), std::string(to_string(s)), std::to_string(r.samples),
                          flag(r.normalization), flag(r.positivity), flag(r.boundedness), flag(r.regularity),
                          flag(r.safety), format_double(r.normalization.worst_violation),
                          format_double(r.boundedness.worst_violation), format_double(r.regularity.worst_violation),
                          format_double(r.safety.worst_violation), format_double(r.lipschitz_estimate)});
      rec.truth("conformance." + std::string(to_string(f)) + "." + std::string(to_string(s)), r.all_pass(),
                conformance_detail(r));
    }
  }
  add_runtime(rec, "runtime.conformance", seconds_since(t0), cfg.params.time_limit);

  // Composition of the configured operators.
  const auto op = cfg.unified();
  const auto eff = op.effective_bounds(w.teachers());
  double norm_dev = 0.0, log_dev = 0.0, bound_dev = 0.0;
  for (std::size_t n = 0; n < cfg.params.samples; ++n) {
    const auto pt = rng.sample_point(w);
    const int token = static_cast<int>(rng.index(static_cast<std::size_t>(w.vocab.size)));
    const int x = w.inputs[pt.input].id, t = w.tasks[pt.task].id, c = w.contexts[pt.context].id;
    const auto wu = op.weights(w, x, token, t, c);
    double sum = 0.0;
    for (double v : wu) {
      sum += v;
      bound_dev = std::max({bound_dev, eff.lo - v, v - eff.hi});
    }
    norm_dev = std::max(norm_dev, std::abs(sum - 1.0));
    const auto d = op.log_decompose(w, x, token, t, c);
    for (std::size_t k = 0; k < d.log_product.size(); ++k) {
      log_dev = std::max(log_dev, std::abs(d.log_product[k] - (d.log_token[k] + d.log_task[k] + d.log_context[k])));
    }
  }
  auto lt = rec.long_table("composition", "composition");
  lt.add("effective_lo", eff.lo);
  lt.add("effective_hi", eff.hi);
  lt.add("max_normalization_deviation", norm_dev);
  lt.add("max_log_identity_deviation", log_dev);
  lt.add("max_effective_bound_violation", bound_dev);
  rec.le("composition.normalization", norm_dev, 1e-9);
  rec.le("composition.log_identity", log_dev, 1e-12);
  rec.le("composition.effective_bounds", std::max(bound_dev, 0.0), 1e-12);
}

// --- train ------------------------------------------------------------------

void write_trace_table(Recorder& rec, const std::string& name, const TrainTrace& trace) {
  auto& t = rec.table(name, {"step", "loss", "mean_kl", "grad_norm", "lr"});
  for (const auto& r : trace.records) {
    t.rows.push_back({std::to_string(r.step), format_double(r.loss), format_double(r.mean_kl),
                      format_double(r.grad_norm), format_double(r.lr)});
  }
}

void run_train(const ExperimentConfig& cfg, RunRecord& record) {
  Recorder rec(record);
  const auto op = cfg.unified();
  const auto first = sgd_train(cfg.trainer, op, cfg.world);
  write_trace_table(rec, "trace", first.trace);
  const auto again = sgd_train(cfg.trainer, op, cfg.world);
  rec.truth("train.reproducible", again.trace == first.trace && again.theta.logits == first.theta.logits);
  rec.truth("train.finite_loss", std::isfinite(first.trace.records.back().loss));
  if (op.is_uniform()) {
    const auto classic = classic_uniform_kd_train(cfg.trainer, cfg.world);
    write_trace_table(rec, "classic_trace", classic.trace);
    const bool same = classic.trace == first.trace && classic.theta.logits == first.theta.logits;
    rec.truth("train.uniform_matches_classic", same, same ? "" : "traces differ");
  } else {
    rec.le("train.loss_decreased", first.trace.records.back().loss, first.trace.records.front().loss);
  }
}

// --- rate -------------------------------------------------------------------

double finite_difference_error(const World& world, const TargetTable& targets, double ridge, int draws,
                               std::uint64_t seed) {
  Sampler rng(seed);
  constexpr double h = 1e-5;
  double worst = 0.0;
  for (int d = 0; d < draws; ++d) {
    auto theta = StudentParams::zeros(world, ridge);
    for (auto& row : theta.logits) {
      for (auto& v : row) v = rng.normal();
    }
    const auto g = kd_gradient(theta, world, targets);
    for (std::size_t x = 0; x < theta.logits.size(); ++x) {
      for (std::size_t i = 0; i < theta.logits[x].size(); ++i) {
        const double keep = theta.logits[x][i];
        theta.logits[x][i] = keep + h;
        const double up = kd_loss(theta, world, targets);
        theta.logits[x][i] = keep - h;
        const double down = kd_loss(theta, world, targets);
        theta.logits[x][i] = keep;
        worst = std::max(worst, std::abs((up - down) / (2.0 * h) - g[x][i]));
      }
    }
  }
  return worst;
}

struct SeedSweep {
  TrainTrace mean;
  double terminal_kl = 0.0;
};

SeedSweep sweep_seeds(const ExperimentConfig& cfg, const TargetTable& targets) {
  std::vector<TrainTrace> traces;
  double kl = 0.0;
  for (int s = 0; s < cfg.params.seeds; ++s) {
    auto tc = cfg.trainer;
    tc.seed = cfg.seed + static_cast<std::uint64_t>(s);
    auto r = sgd_train(tc, cfg.world, targets);
    kl += r.trace.records.back().mean_kl;
    traces.push_back(std::move(r.trace));
  }
  return {average_traces(traces), kl / cfg.params.seeds};
}

void run_rate(const ExperimentConfig& cfg, RunRecord& record) {
  Recorder rec(record);
  const auto t0 = std::chrono::steady_clock::now();
  const auto& w = cfg.world;
  const auto op = cfg.unified();
  const auto targets = TargetTable::adaptive(w, op);
  const auto star = minimize_kd(w, targets, cfg.trainer.ridge, 1e-10);
  const auto exact = minimize_kd(w, targets, 0.0, 1e-10);

  const auto adaptive = sweep_seeds(cfg, targets);
  write_trace_table(rec, "rate_trace", adaptive.mean);
  const auto fit = fit_convergence_rate(adaptive.mean, star.value);

  const auto uniform_targets = TargetTable::adaptive(w, UnifiedWeightOperator::uniform(cfg.bounds));
  const auto uniform_star = minimize_kd(w, uniform_targets, cfg.trainer.ridge, 1e-10);
  const auto uniform = sweep_seeds(cfg, uniform_targets);
  const auto uniform_fit = fit_convergence_rate(uniform.mean, uniform_star.value);

  const double fd = finite_difference_error(w, targets, cfg.trainer.ridge, cfg.params.fd_draws, cfg.seed + 7919);
  const double elapsed = seconds_since(t0);

  auto lt = rec.long_table("rate", "rate");
  lt.add("loss_star", star.value);
  lt.add("loss_star_grad_norm", star.grad_norm);
  lt.add("kl_at_regularized_optimum", mean_kl(star.theta, targets));
  lt.add("kl_at_unregularized_optimum", mean_kl(exact.theta, targets));
  lt.add("terminal_mean_kl", adaptive.terminal_kl);
  lt.add("slope", fit.slope);
  lt.add("constant", fit.constant);
  lt.add("fit_r2", fit.r2);
  lt.add("uniform_slope", uniform_fit.slope);
  lt.add("fd_max_error", fd);
  lt.add("seconds", elapsed);

  rec.le("rate.terminal_mean_kl", adaptive.terminal_kl, cfg.params.kl_max,
         "KL at the regularized optimum is " + format_double(mean_kl(star.theta, targets)));
  rec.within("rate.slope", fit.slope, cfg.params.slope_lo, cfg.params.slope_hi);
  rec.le("rate.finite_difference", fd, cfg.params.fd_tol);
  rec.le("rate.adaptive_vs_uniform_slope", std::abs(fit.slope - uniform_fit.slope), cfg.params.slope_agreement);
  add_runtime(rec, "runtime.rate", elapsed, cfg.params.time_limit);
}

// --- fixed point ------------------------------------------------------------

void run_fixed_point(const ExperimentConfig& cfg, RunRecord& record) {
  Recorder rec(record);
  const auto& w = cfg.world;
  WeightUpdateConfig uc;
  uc.beta = cfg.params.beta;
  uc.gain = cfg.params.gain;
  uc.tol = cfg.params.tol;
  uc.max_iters = cfg.params.max_iters;
  uc.bounds = cfg.bounds;
  const auto model = FeedbackModel::from_world(w);
  Sampler rng(cfg.seed);
  const double rho = estimate_contraction(uc, model, cfg.params.pairs, rng);

  auto lt = rec.long_table("fixed_point", "fixed_point");
  lt.add("beta", uc.beta);
  lt.add("rho_hat", rho);

  const int k = w.teachers();
  std::vector<FixedPointTrace> runs;
  runs.push_back(iterate_to_fixed_point(std::vector<double>(static_cast<std::size_t>(k), 1.0 / k), uc, model));
  for (int s = 1; s < cfg.params.starts; ++s) {
    runs.push_back(iterate_to_fixed_point(random_feasible_weights(k, uc.bounds, rng), uc, model));
  }
  bool converged = true, envelope = true, closed = true;
  double worst_envelope = 0.0, spread = 0.0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto& tr = runs[r];
    converged = converged && tr.converged;
    const auto env = check_geometric_envelope(tr, rho);
    envelope = envelope && env.pass;
    worst_envelope = std::max(worst_envelope, env.worst_ratio);
    spread = std::max(spread, max_abs_diff(tr.terminal(), runs.front().terminal()));
    for (const auto& it : tr.iterates) {
      for (double v : it) closed = closed && v >= uc.bounds.w_min - 1e-12 && v <= uc.bounds.w_max + 1e-12;
    }
    lt.add("start_" + std::to_string(r) + ".iterations", static_cast<double>(tr.distances.size()));
    lt.add("start_" + std::to_string(r) + ".trace_rho", tr.rho_hat);
  }
  const auto& star = runs.front().terminal();
  for (std::size_t i = 0; i < star.size(); ++i) lt.add("w_star_" + std::to_string(i), star[i]);
  for (std::size_t n = 0; n < runs.front().distances.size(); ++n) {
    lt.add("distance_" + std::to_string(n + 1), runs.front().distances[n]);
  }

  WeightUpdateConfig control = uc;
  const auto flat = FeedbackModel::constant(k);
  Sampler rng2(cfg.seed + 1);
  const double rho_control = estimate_contraction(control, flat, cfg.params.pairs, rng2);
  lt.add("rho_hat_constant_target", rho_control);

  rec.le("fixed_point.rho_below_one", rho, 1.0 - 1e-12);
  rec.truth("fixed_point.converged", converged);
  rec.le("fixed_point.geometric_envelope", worst_envelope, 1.0 + 1e-6, envelope ? "" : "envelope exceeded");
  rec.le("fixed_point.uniqueness", spread, cfg.params.uniqueness_tol);
  rec.truth("fixed_point.closure", closed);
  rec.near("fixed_point.constant_target_rho", rho_control, 1.0 - uc.beta, cfg.params.control_tol);
}

// --- perturbation -----------------------------------------------------------

void run_perturbation(const ExperimentConfig& cfg, RunRecord& record) {
  Recorder rec(record);
  const auto rows = perturbation_experiment(cfg.unified(), cfg.world, cfg.params.deltas, cfg.trainer.ridge, cfg.seed);
  auto lt = rec.long_table("perturbation", "");
  std::vector<double> x, y;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  bool monotone = true;
  for (std::size_t n = 0; n < rows.size(); ++n) {
    const auto& r = rows[n];
    char label[32];
    std::snprintf(label, sizeof label, "delta=%g", r.delta);
    lt.experiment = label;
    lt.add("distance", r.distance);
    lt.add("ratio", r.ratio);
    x.push_back(r.delta);
    y.push_back(r.distance);
    if (r.delta > 0.0) {
      lo = std::min(lo, r.ratio);
      hi = std::max(hi, r.ratio);
    }
    if (n > 0 && rows[n - 1].delta <= r.delta && r.distance < rows[n - 1].distance) monotone = false;
  }
  const auto fit = fit_through_origin(x, y);
  lt.experiment = "fit";
  lt.add("C", fit.slope);
  lt.add("r2", fit.r2);
  rec.ge("perturbation.r2", fit.r2, cfg.params.r2_min);
  rec.le("perturbation.ratio_spread", lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity(),
         cfg.params.ratio_max);
  rec.truth("perturbation.monotone", monotone);
}

// --- variance ---------------------------------------------------------------

void run_variance(const ExperimentConfig& cfg, RunRecord& record) {
  Recorder rec(record);
  const auto& w = cfg.world;
  const auto theta = StudentParams::zeros(w, cfg.trainer.ridge);
  auto lt = rec.long_table("variance", "");
  for (Family f : cfg.params.families) {
    const auto r = gradient_variance_ratio(single_family(f, cfg.bounds), w, theta, cfg.params.variance_samples,
                                           cfg.seed);
    const std::string name(to_string(f));
    lt.experiment = name;
    lt.add("measured", r.measured);
    lt.add("base", r.base);
    lt.add("w_min", r.w_min);
    lt.add("w_max", r.w_max);
    lt.add("bound", r.bound);
    if (f == Family::Uniform) {
      rec.near("variance.uniform_equality", r.measured / r.base, 1.0, cfg.params.equality_tol);
    } else {
      rec.le("variance." + name, r.measured, r.bound);
    }
  }
}

// --- safety -----------------------------------------------------------------

void dual_table(Recorder& rec, const std::string& name, const DualResult& r) {
  auto& t = rec.table(name, {"iteration", "mu", "safety", "kd_loss", "feasibility", "slackness"});
  for (const auto& s : r.history) {
    t.rows.push_back({std::to_string(s.iteration), format_double(s.mu), format_double(s.safety),
                      format_double(s.kd_loss), format_double(s.feasibility), format_double(s.slackness)});
  }
}

void run_safety(const ExperimentConfig& cfg, RunRecord& record) {
  Recorder rec(record);
  const auto t0 = std::chrono::steady_clock::now();
  const auto& w = cfg.world;
  const auto op = cfg.unified();
  const auto targets = TargetTable::adaptive(w, op);
  const double ridge = cfg.trainer.ridge;

  const auto free = minimize_kd(w, targets, ridge, cfg.safety.grad_tol);
  const double free_safety = expected_safety(free.theta, w, cfg.safety);
  const double top = max_achievable_safety(w, cfg.safety);
  auto lt = rec.long_table("safety", "safety");
  lt.add("unconstrained_safety", free_safety);
  lt.add("max_achievable_safety", top);

  // Inactive threshold.
  auto inactive_cfg = cfg.safety;
  inactive_cfg.s_min = cfg.params.s_min_inactive.value_or(0.5 * free_safety);
  const auto inactive = dual_ascent_solve(w, targets, inactive_cfg, ridge);
  const auto kin = kkt_residuals(inactive.theta, inactive.mu, w, targets, inactive_cfg);
  double drift = 0.0;
  for (std::size_t x = 0; x < free.theta.logits.size(); ++x) {
    drift = std::max(drift, max_abs_diff(free.theta.logits[x], inactive.theta.logits[x]));
  }
  lt.add("inactive.s_min", inactive_cfg.s_min);
  lt.add("inactive.mu", inactive.mu);
  lt.add("inactive.stationarity", kin.stationarity);
  lt.add("inactive.theta_drift", drift);
  rec.near("safety.inactive_mu_zero", inactive.mu, 0.0, 0.0);
  rec.le("safety.inactive_matches_unconstrained", drift, 1e-6);
  rec.le("safety.inactive_kkt", kin.max(), cfg.params.kkt_tol);

  // Active threshold from the config.
  const auto active = dual_ascent_solve(w, targets, cfg.safety, ridge);
  dual_table(rec, "dual_history", active);
  const auto k = kkt_residuals(active.theta, active.mu, w, targets, cfg.safety);
  const double s_active = expected_safety(active.theta, w, cfg.safety);
  lt.add("active.s_min", cfg.safety.s_min);
  lt.add("active.mu", active.mu);
  lt.add("active.safety", s_active);
  lt.add("active.dual_iterations", static_cast<double>(active.history.size()));
  lt.add("active.stationarity", k.stationarity);
  lt.add("active.slackness", k.slackness);
  lt.add("active.primal", k.primal);
  lt.add("active.dual", k.dual);
  rec.le("safety.kkt_stationarity", k.stationarity, cfg.params.kkt_tol);
  rec.le("safety.kkt_slackness", k.slackness, cfg.params.kkt_tol);
  rec.le("safety.kkt_primal", k.primal, cfg.params.kkt_tol);
  rec.le("safety.kkt_dual", k.dual, cfg.params.kkt_tol);
  if (cfg.safety.s_min > free_safety) {
    rec.ge("safety.active_mu_positive", active.mu, std::numeric_limits<double>::min());
    rec.near("safety.active_on_threshold", s_active, cfg.safety.s_min, cfg.params.kkt_tol);
  }
  bool nonincreasing = true;
  for (std::size_t n = 2; n < active.history.size(); ++n) {
    if (active.history[n].feasibility > active.history[n - 1].feasibility + 1e-12) nonincreasing = false;
  }
  rec.truth("safety.feasibility_nonincreasing", nonincreasing);

  const auto jensen = jensen_preservation_check(op, w, cfg.safety, cfg.seed, cfg.params.samples, cfg.params.jensen_tol);
  lt.add("jensen.student_safety", jensen.student_safety);
  lt.add("jensen.ensemble_safety", jensen.ensemble_safety);
  rec.ge("safety.jensen", jensen.student_safety, jensen.ensemble_safety - cfg.params.jensen_tol);
  add_runtime(rec, "runtime.safety", seconds_since(t0), cfg.params.time_limit);
}

void run_pareto(const ExperimentConfig& cfg, RunRecord& record) {
  Recorder rec(record);
  const auto t0 = std::chrono::steady_clock::now();
  const auto& w = cfg.world;
  const auto targets = TargetTable::adaptive(w, cfg.unified());
  auto grid = cfg.params.mu_grid;
  if (grid.empty()) {
    for (int n = 0; n < 20; ++n) grid.push_back(0.5 * n);
  }
  const auto sweep = pareto_sweep(w, targets, cfg.safety, grid, cfg.trainer.ridge);
  auto& t = rec.table("pareto", {"mu", "kd_loss", "safety"});
  for (const auto& p : sweep) t.rows.push_back({format_double(p.mu), format_double(p.kd_loss), format_double(p.safety)});
  const auto mono = check_pareto_monotone(sweep);
  double dup = 0.0;
  for (std::size_t a = 0; a < sweep.size(); ++a) {
    for (std::size_t b = a + 1; b < sweep.size(); ++b) {
      if (std::abs(sweep[a].safety - sweep[b].safety) <= 1e-12) {
        dup = std::max(dup, std::abs(sweep[a].kd_loss - sweep[b].kd_loss));
      }
    }
  }
  rec.ge("pareto.points", static_cast<double>(sweep.size()), static_cast<double>(grid.size()));
  rec.le("pareto.safety_nondecreasing", mono.worst_safety_drop, 1e-9);
  rec.le("pareto.loss_nondecreasing", mono.worst_loss_drop, 1e-9);
  rec.le("pareto.equal_safety_equal_loss", dup, 1e-6);
  add_runtime(rec, "runtime.pareto", seconds_since(t0), cfg.params.time_limit);
}

// --- two-teacher example ----------------------------------------------------

void run_appendix_a(const ExperimentConfig& cfg, RunRecord& record) {
  Recorder rec(record);
  const auto t0 = std::chrono::steady_clock::now();
  const auto& w = cfg.world;
  const auto& prm = cfg.params;
  const auto& b = cfg.bounds;
  if (w.teachers() != 2 || w.inputs.empty() || w.contexts.empty()) {
    throw Error(ErrorCode::InvalidArgument, "appendix_a needs a two-teacher world");
  }
  const int x = w.inputs.front().id, c = w.contexts.front().id;
  const auto& dists = w.bank.at(x, c);
  auto& tab = rec.table("appendix_a", {"quantity", "index", "value"});
  auto put = [&](const std::string& q, std::span<const double> v) {
    for (std::size_t i = 0; i < v.size(); ++i) tab.rows.push_back({q, std::to_string(i), format_double(v[i])});
  };

  const auto wie = inverse_entropy_weights(prm.entropies, b);
  put("given_entropy", prm.entropies);
  put("inverse_entropy_weight", wie);
  rec.le("appendix_a.weights", max_abs_diff(wie, prm.expected_weights), prm.weight_tol,
         "w = (" + format_double(wie[0]) + ", " + format_double(wie[1]) + ")");

  const std::vector<double> half{0.5, 0.5};
  const auto qu = weighted_ensemble(half, dists);
  const auto qa = weighted_ensemble(wie, dists);
  put("q_uniform", qu.probs());
  put("q_adaptive", qa.probs());
  rec.le("appendix_a.q_uniform", max_abs_diff(qu.probs(), prm.expected_uniform), 1e-12);
  rec.le("appendix_a.q_adaptive", max_abs_diff(qa.probs(), prm.expected_adaptive), prm.adaptive_tol);
  rec.le("appendix_a.q_adaptive_reported", max_abs_diff(qa.probs(), prm.reported_adaptive), prm.reported_tol,
         "q_adaptive(a) = " + format_double(qa[0]) + " vs reported " + format_double(prm.reported_adaptive[0]));
  rec.ge("appendix_a.gain", qa[0] - qu[0], prm.min_gain);
  if (cfg.has_safety) {
    const int label = cfg.safety.label(x, c);
    const double su = safety_measure(qu.probs(), label, w.vocab);
    const double sa = safety_measure(qa.probs(), label, w.vocab);
    tab.rows.push_back({"safety_uniform", std::to_string(label), format_double(su)});
    tab.rows.push_back({"safety_adaptive", std::to_string(label), format_double(sa)});
    rec.ge("appendix_a.adaptive_safety_gain", sa, su);
  }

  std::vector<double> nat;
  for (const auto& d : dists) nat.push_back(entropy(d));
  put("recomputed_entropy_nats", nat);
  put("recomputed_inverse_entropy_weight", inverse_entropy_weights(nat, b));

  // Two different conforming token operators on the same teacher pair.
  int plain = 0;
  while (plain < w.vocab.size && w.vocab.is_safety_token(plain)) ++plain;
  const auto fa = make_token_operator(Family::FamilyA, cfg.token.params);
  const auto fb = make_token_operator(Family::FamilyB, cfg.token.params);
  const auto wa = fa->weights(w, {x, plain, c}, b);
  const auto wb = fb->weights(w, {x, plain, c}, b);
  put("family_a_weight", wa);
  put("family_b_weight", wb);
  Sampler rng(cfg.seed);
  const auto ra = check_conformance(as_weight_fn(fa, b), Scale::Token, w, b, rng, prm.samples);
  const auto rb = check_conformance(as_weight_fn(fb, b), Scale::Token, w, b, rng, prm.samples);
  rec.ge("appendix_a.family_gap", max_abs_diff(wa, wb), prm.min_family_gap);
  rec.truth("appendix_a.family_a_conforms", ra.all_pass(), conformance_detail(ra));
  rec.truth("appendix_a.family_b_conforms", rb.all_pass(), conformance_detail(rb));
  add_runtime(rec, "runtime.appendix_a", seconds_since(t0), prm.time_limit);
}

}  // namespace

RunRecord run_experiment(const ExperimentConfig& config) {
  RunRecord record;
  record.config_hash = config.hash;
  record.kind = std::string(to_string(config.kind));
  record.started = utc_now();
  try {
    switch (config.kind) {
      case ExperimentKind::Conformance: run_conformance(config, record); break;
      case ExperimentKind::Train: run_train(config, record); break;
      case ExperimentKind::Rate: run_rate(config, record); break;
      case ExperimentKind::FixedPoint: run_fixed_point(config, record); break;
      case ExperimentKind::Perturbation: run_perturbation(config, record); break;
      case ExperimentKind::Variance: run_variance(config, record); break;
      case ExperimentKind::Safety: run_safety(config, record); break;
      case ExperimentKind::Pareto: run_pareto(config, record); break;
      case ExperimentKind::AppendixA: run_appendix_a(config, record); break;
    }
  } catch (const Error& e) {
    throw Error(e.code(), "[" + record.kind + " " + config.hash + "] " + e.what());
  }
  record.finished = utc_now();
  return record;
}

namespace {

void write_csv(const Table& t, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + file.string());
  out << join(t.columns, ",") << '\n';
  for (const auto& row : t.rows) out << join(row, ",") << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + file.string());
}

}  // namespace

void emit_summary(const RunRecord& record, const std::filesystem::path& out_dir, std::ostream& human, bool quiet) {
  if (record.empty()) throw Error(ErrorCode::InvalidArgument, "refusing to emit an empty run record");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
  for (const auto& t : record.tables) write_csv(t, out_dir / (t.name + ".csv"));

  nlohmann::ordered_json summary;
  summary["config_hash"] = record.config_hash;
  summary["kind"] = record.kind;
  summary["assertions"] = nlohmann::ordered_json::array();
  for (const auto& a : record.assertions) {
    nlohmann::ordered_json e;
    e["name"] = a.name;
    e["expected"] = a.expected;
    e["measured"] = a.measured;
    e["tol"] = a.tol;
    e["pass"] = a.pass;
    summary["assertions"].push_back(std::move(e));
  }
  const auto file = out_dir / "summary.json";
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + file.string());
  out << summary.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + file.string());

  if (quiet) return;
  human << record.kind << " " << record.config_hash << " (awkd " << record.version << ", " << record.started
        << " .. " << record.finished << ")\n";
  for (const auto& a : record.assertions) {
    human << (a.pass ? "PASS " : "FAIL ") << a.name << ": measured " << format_double(a.measured) << ", expected "
          << format_double(a.expected);
    if (a.tol != 0.0) human << " +/- " << format_double(a.tol);
    if (!a.detail.empty()) human << " [" << a.detail << "]";
    human << '\n';
  }
  human << (record.all_pass() ? "all assertions passed" : "some assertions failed") << " -> " << out_dir.string()
        << '\n';
}

std::filesystem::path resolve_output_dir(const std::optional<std::string>& flag, const ExperimentConfig& config) {
  if (flag && !flag->empty()) return *flag;
  if (!config.output.empty()) return config.output;
  if (const char* env = std::getenv("AWKD_OUT"); env && *env) return env;
  return "awkd-out";
}

}  // namespace awkd
