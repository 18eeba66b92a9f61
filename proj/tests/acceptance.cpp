#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "awkd/runner.hpp"

using namespace awkd;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs{AWKD_CONFIG_DIR};

struct Outcome {
  bool pass = true;
  std::string note;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      note += (note.empty() ? "" : "; ") + what;
    }
  }
};

struct Timed {
  RunRecord record;
  double seconds = 0.0;
};

Timed run(ExperimentConfig cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  Timed t{run_experiment(cfg), 0.0};
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return t;
}

ExperimentConfig load(const char* kind) { return parse_config(kConfigs / (std::string(kind) + ".json")); }

double measured(const RunRecord& r, const std::string& name) { return r.assertion(name).measured; }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

bool is_toy_world(const World& w) {
  return w.teachers() == 3 && w.vocab.size == 10 && w.inputs.size() == 8 && w.tasks.size() == 2 &&
         w.contexts.size() == 2;
}

Outcome appendix(const Timed& t) {
  Outcome o;
  const auto& r = t.record;
  const double wdev = measured(r, "appendix_a.weights");
  const double qu = measured(r, "appendix_a.q_uniform");
  const double qa = measured(r, "appendix_a.q_adaptive");
  const double gain = measured(r, "appendix_a.gain");
  o.require(wdev <= 0.005, "weights off by " + num(wdev));
  o.require(qu <= 1e-12, "q_uniform off by " + num(qu));
  o.require(qa <= 1e-3, "q_adaptive off by " + num(qa));
  o.require(gain >= 0.07, "gain " + num(gain));
  o.require(t.seconds < 1.0, "runtime " + num(t.seconds) + " s");
  o.note = o.pass ? "weight dev " + num(wdev) + ", q_adaptive dev " + num(qa) + ", gain " + num(gain) + ", " +
                        num(t.seconds) + " s"
                  : o.note;
  return o;
}

Outcome witness(const Timed& t) {
  Outcome o;
  const auto& r = t.record;
  const double gap = measured(r, "appendix_a.family_gap");
  o.require(gap > 0.1, "gap " + num(gap));
  o.require(r.assertion("appendix_a.family_a_conforms").pass, "Family A fails conformance");
  o.require(r.assertion("appendix_a.family_b_conforms").pass, "Family B fails conformance");
  if (o.pass) o.note = "inf-norm gap " + num(gap) + ", both conform";
  return o;
}

Outcome conformance(const Timed& t, std::size_t samples) {
  Outcome o;
  int checked = 0;
  for (const auto& a : t.record.assertions) {
    if (a.name.rfind("conformance.", 0) != 0) continue;
    ++checked;
    o.require(a.pass, a.name + " [" + a.detail + "]");
  }
  o.require(checked == 15, std::to_string(checked) + " family/scale pairs checked");
  o.require(samples >= 1000, "only " + std::to_string(samples) + " samples");
  o.require(t.seconds < 10.0, "runtime " + num(t.seconds) + " s");
  if (o.pass) o.note = "15/15 family-scale pairs at " + std::to_string(samples) + " points, " + num(t.seconds) + " s";
  return o;
}

Outcome composition(const Timed& t) {
  Outcome o;
  const double n = measured(t.record, "composition.normalization");
  const double l = measured(t.record, "composition.log_identity");
  const double b = measured(t.record, "composition.effective_bounds");
  o.require(n <= 1e-9, "normalization " + num(n));
  o.require(l <= 1e-12, "log identity " + num(l));
  o.require(b <= 1e-12, "effective bounds exceeded by " + num(b));
  if (o.pass) o.note = "normalization " + num(n) + ", log identity " + num(l);
  return o;
}

Outcome uniform_special(const Timed& t) {
  Outcome o;
  o.require(t.record.assertion("train.uniform_matches_classic").pass, "traces differ");
  if (o.pass) o.note = "adaptive(uniform) trace == classic trace";
  return o;
}

Outcome rate(const Timed& t, const ExperimentConfig& cfg) {
  Outcome o;
  const auto& r = t.record;
  const double kl = measured(r, "rate.terminal_mean_kl");
  const double slope = measured(r, "rate.slope");
  const double fd = measured(r, "rate.finite_difference");
  o.require(is_toy_world(cfg.world), "config world is not the toy world");
  o.require(cfg.trainer.ridge == 0.01 && cfg.trainer.steps == 50000 && cfg.params.seeds == 10,
            "config departs from ridge 0.01 / 50000 steps / 10 seeds");
  o.require(kl <= 1e-3, "terminal mean KL " + num(kl) + " > 1e-3 (" + r.assertion("rate.terminal_mean_kl").detail +
                            ")");
  o.require(slope >= -1.3 && slope <= -0.7, "slope " + num(slope));
  o.require(fd <= 1e-6, "finite difference " + num(fd));
  o.require(t.seconds < 120.0, "runtime " + num(t.seconds) + " s");
  if (o.pass) o.note = "KL " + num(kl) + ", slope " + num(slope) + ", fd " + num(fd);
  else o.note += " | slope " + num(slope) + ", fd " + num(fd) + ", " + num(t.seconds) + " s";
  return o;
}

Outcome fixed_point(const Timed& t, const ExperimentConfig& cfg) {
  Outcome o;
  const auto& r = t.record;
  const double rho = measured(r, "fixed_point.rho_below_one");
  const double spread = measured(r, "fixed_point.uniqueness");
  const double control = measured(r, "fixed_point.constant_target_rho");
  o.require(is_toy_world(cfg.world), "config world is not the toy world");
  o.require(rho < 1.0, "rho " + num(rho));
  o.require(r.assertion("fixed_point.geometric_envelope").pass, "envelope violated");
  o.require(r.assertion("fixed_point.converged").pass, "did not converge");
  o.require(spread <= 1e-6, "starts disagree by " + num(spread));
  o.require(std::abs(control - 0.7) <= 1e-9, "control rho " + num(control));
  if (o.pass) o.note = "rho " + num(rho) + ", start spread " + num(spread) + ", control " + num(control);
  return o;
}

Outcome perturbation(const Timed& t) {
  Outcome o;
  const double r2 = measured(t.record, "perturbation.r2");
  const double spread = measured(t.record, "perturbation.ratio_spread");
  o.require(r2 >= 0.95, "r2 " + num(r2));
  o.require(spread <= 3.0, "ratio spread " + num(spread));
  if (o.pass) o.note = "r2 " + num(r2) + ", ratio spread " + num(spread);
  return o;
}

Outcome variance(const Timed& t) {
  Outcome o;
  int families = 0;
  for (const auto& a : t.record.assertions) {
    if (a.name == "variance.uniform_equality") {
      o.require(std::abs(a.measured - 1.0) <= 0.02, "uniform ratio " + num(a.measured));
    } else if (a.name.rfind("variance.", 0) == 0) {
      ++families;
      o.require(a.measured <= a.expected, a.name + " " + num(a.measured) + " > " + num(a.expected));
    }
  }
  o.require(families == 4, std::to_string(families) + " adaptive families checked");
  if (o.pass) o.note = "4 adaptive families within bound, uniform ratio exact";
  return o;
}

Outcome safety(const Timed& s, const Timed& p) {
  Outcome o;
  const auto& r = s.record;
  for (const char* k : {"safety.kkt_stationarity", "safety.kkt_slackness", "safety.kkt_primal", "safety.kkt_dual"}) {
    o.require(measured(r, k) <= 1e-3, std::string(k) + " " + num(measured(r, k)));
  }
  o.require(measured(r, "safety.inactive_mu_zero") == 0.0, "inactive mu " + num(measured(r, "safety.inactive_mu_zero")));
  const auto& j = r.assertion("safety.jensen");
  o.require(j.measured >= j.expected, "student safety " + num(j.measured) + " below ensemble - 1e-3");
  const auto& pr = p.record;
  o.require(measured(pr, "pareto.points") >= 20, "fewer than 20 mu values");
  o.require(pr.assertion("pareto.safety_nondecreasing").pass, "safety decreases along mu");
  o.require(pr.assertion("pareto.loss_nondecreasing").pass, "loss decreases along mu");
  o.require(s.seconds + p.seconds < 120.0, "runtime " + num(s.seconds + p.seconds) + " s");
  if (o.pass) {
    o.note = "KKT max " + num(std::max({measured(r, "safety.kkt_stationarity"), measured(r, "safety.kkt_slackness"),
                                        measured(r, "safety.kkt_primal"), measured(r, "safety.kkt_dual")})) +
             ", inactive mu 0, 20-point sweep monotone";
  }
  return o;
}

}  // namespace

int main() {
  auto app_cfg = load("appendix_a");
  app_cfg.params = KindParams{};
  app_cfg.params.samples = 1000;
  Timed app;
  auto conf_cfg = load("conformance");
  conf_cfg.params.samples = std::max<std::size_t>(conf_cfg.params.samples, 1000);
  conf_cfg.params.families = KindParams{}.families;
  Timed conf;
  auto train_cfg = load("train");
  train_cfg.token = train_cfg.task = train_cfg.context = ScaleSelection{};
  auto rate_cfg = load("rate");
  rate_cfg.params.kl_max = 1e-3;
  rate_cfg.params.fd_tol = 1e-6;
  rate_cfg.params.fd_draws = 100;
  auto fp_cfg = load("fixed_point");
  fp_cfg.params.beta = 0.3;
  fp_cfg.params.starts = 10;
  auto pert_cfg = load("perturbation");
  pert_cfg.params.deltas = {1e-3, 1e-2, 1e-1};
  auto var_cfg = load("variance");
  var_cfg.params.variance_samples = 10000;
  var_cfg.params.families = KindParams{}.families;
  auto safe_cfg = load("safety");
  auto par_cfg = load("pareto");
  par_cfg.params.mu_grid.clear();

  int failures = 0;
  auto report = [&](int n, const char* title, const std::function<Outcome()>& judge) {
    Outcome o;
    try {
      o = judge();
    } catch (const std::exception& e) {
      o.pass = false;
      o.note = std::string("error: ") + e.what();
    }
    if (!o.pass) ++failures;
    std::printf("criterion %2d %-24s %s  %s\n", n, title, o.pass ? "PASS" : "FAIL", o.note.c_str());
    std::fflush(stdout);
  };

  report(1, "two-teacher golden", [&] {
    app = run(app_cfg);
    return appendix(app);
  });
  report(2, "axiom conformance", [&] {
    conf = run(conf_cfg);
    return conformance(conf, conf_cfg.params.samples);
  });
  report(3, "non-uniqueness witness", [&] { return witness(app); });
  report(4, "uniform special case", [&] { return uniform_special(run(train_cfg)); });
  report(5, "convergence", [&] { return rate(run(rate_cfg), rate_cfg); });
  report(6, "fixed point", [&] { return fixed_point(run(fp_cfg), fp_cfg); });
  report(7, "perturbation", [&] { return perturbation(run(pert_cfg)); });
  report(8, "gradient variance", [&] { return variance(run(var_cfg)); });
  report(9, "safety", [&] { return safety(run(safe_cfg), run(par_cfg)); });
  report(10, "composition", [&] { return composition(conf); });

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
