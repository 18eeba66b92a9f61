#include <doctest.h>

#include <cmath>

#include "awkd/composition.hpp"
#include "test_util.hpp"

using namespace awkd;
using doctest::Approx;

TEST_CASE("unified weight of uniform components is exactly 1/K") {
  for (int k : {2, 3, 5, 7}) {
    const std::vector<double> u(static_cast<std::size_t>(k), 1.0 / k);
    const auto w = unified_weight(u, u, u);
    for (double v : w) CHECK(v == 1.0 / k);
  }
}

TEST_CASE("unified weight arithmetic") {
  const std::vector<double> tok{0.7, 0.3}, task{0.5, 0.5}, ctx{0.8, 0.2};
  const auto w = unified_weight(tok, task, ctx);
  CHECK(w[0] == Approx(0.28 / 0.31).epsilon(1e-14));
  CHECK(w[0] == Approx(0.90323).epsilon(1e-5));
  CHECK(w[1] == Approx(0.09677).epsilon(1e-4));
  const std::vector<double> short_one{1.0};
  CHECK_THROWS_AS(unified_weight(tok, short_one, ctx), Error);
}

TEST_CASE("unified weight is permutation equivariant") {
  Sampler rng(8);
  for (int n = 0; n < 100; ++n) {
    std::vector<double> a(4), b(4), c(4);
    for (auto* v : {&a, &b, &c}) {
      for (auto& e : *v) e = 0.05 + rng.uniform();
    }
    const auto w = unified_weight(a, b, c);
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    std::vector<double> pa(4), pb(4), pc(4);
    for (std::size_t k = 0; k < 4; ++k) {
      pa[k] = a[perm[k]];
      pb[k] = b[perm[k]];
      pc[k] = c[perm[k]];
    }
    const auto pw = unified_weight(pa, pb, pc);
    for (std::size_t k = 0; k < 4; ++k) CHECK(pw[k] == Approx(w[perm[k]]).epsilon(1e-14));
  }
}

TEST_CASE("weighted ensemble of the teacher pair") {
  const auto w = test::two_teacher_world();
  const auto& dists = w.bank.at(0, 0);
  const std::vector<double> half{0.5, 0.5};
  const auto qu = weighted_ensemble(half, dists);
  const std::vector<double> expect_u{0.6, 0.25, 0.15};
  CHECK(max_abs_diff(qu.probs(), expect_u) <= 1e-12);

  const std::vector<double> adaptive{0.69, 0.31};
  const auto qa = weighted_ensemble(adaptive, dists);
  const std::vector<double> oracle{0.69 * 0.8 + 0.31 * 0.4, 0.69 * 0.15 + 0.31 * 0.35, 0.69 * 0.05 + 0.31 * 0.25};
  CHECK(max_abs_diff(qa.probs(), oracle) <= 1e-15);
  CHECK(qa[0] == Approx(0.676).epsilon(1e-12));
  const std::vector<double> reported{0.68, 0.21, 0.11};
  CHECK(max_abs_diff(qa.probs(), reported) <= 0.005);

  const std::vector<double> vertex{1.0, 0.0};
  const auto q1 = weighted_ensemble(vertex, dists);
  CHECK(max_abs_diff(q1.probs(), dists[0].probs()) == 0.0);
}

TEST_CASE("property: ensemble entries stay within the teachers' envelope") {
  const auto w = test::toy_world();
  Sampler rng(9);
  for (const auto& [key, dists] : w.bank.table()) {
    std::vector<double> raw(dists.size());
    for (auto& r : raw) r = rng.uniform() + 1e-3;
    const double s = test::sum(raw);
    for (auto& r : raw) r /= s;
    const auto q = weighted_ensemble(raw, dists);
    for (std::size_t i = 0; i < q.size(); ++i) {
      double lo = 1.0, hi = 0.0;
      for (const auto& d : dists) {
        lo = std::min(lo, d[i]);
        hi = std::max(hi, d[i]);
      }
      CHECK(q[i] >= lo - 1e-15);
      CHECK(q[i] <= hi + 1e-15);
    }
  }
}

TEST_CASE("effective bounds formula") {
  const auto e = effective_unified_bounds({0.05, 0.95, 1}, 3);
  const double m3 = std::pow(0.05, 3), M3 = std::pow(0.95, 3);
  CHECK(e.lo == Approx(m3 / (m3 + 2 * M3)).epsilon(1e-14));
  CHECK(e.hi == Approx(M3 / (M3 + 2 * m3)).epsilon(1e-14));
}

TEST_CASE("log decomposition") {
  const WeightBounds b{0.05, 0.95, 10};
  const auto w = test::two_teacher_world();
  const auto uni = UnifiedWeightOperator::uniform(b);
  const auto d = uni.log_decompose(w, 0, 1, 0, 0);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(d.log_token[k] == Approx(-std::log(2.0)).epsilon(1e-14));
    CHECK(d.log_product[k] == Approx(-3 * std::log(2.0)).epsilon(1e-14));
  }
  CHECK(std::log(0.28) == Approx(-1.27297).epsilon(1e-5));
}

TEST_CASE("property: unified operator on the toy world") {
  const WeightBounds b{0.05, 0.95, 10};
  const auto w = test::toy_world();
  const UnifiedWeightOperator op(make_token_operator(Family::FamilyA), make_task_operator(Family::FamilyC),
                                 make_context_operator(Family::FamilyA), b);
  const auto eff = op.effective_bounds(w.teachers());
  Sampler rng(10);
  for (int n = 0; n < 1000; ++n) {
    const auto p = rng.sample_point(w);
    const int x = w.inputs[p.input].id, t = w.tasks[p.task].id, c = w.contexts[p.context].id;
    const int i = static_cast<int>(rng.index(10));
    const auto u = op.weights(w, x, i, t, c);
    CHECK(std::abs(test::sum(u) - 1.0) <= 1e-9);
    for (double v : u) {
      CHECK(v >= eff.lo);
      CHECK(v <= eff.hi);
    }
    const auto d = op.log_decompose(w, x, i, t, c);
    for (std::size_t k = 0; k < u.size(); ++k) {
      CHECK(std::abs(d.log_product[k] - (d.log_token[k] + d.log_task[k] + d.log_context[k])) <= 1e-12);
    }
    const auto q = op.target(w, x, t, c);
    CHECK(std::abs(test::sum(std::vector<double>(q.probs().begin(), q.probs().end())) - 1.0) <= 1e-9);
  }
}

TEST_CASE("property: subsets of scales compose into conforming operators") {
  const WeightBounds b{0.05, 0.95, 10};
  const auto w = test::toy_world();
  Sampler rng(12);
  const UnifiedWeightOperator token_only(make_token_operator(Family::FamilyA), make_task_operator(Family::Uniform),
                                         make_context_operator(Family::Uniform), b);
  const UnifiedWeightOperator task_ctx(make_token_operator(Family::Uniform), make_task_operator(Family::FamilyC),
                                       make_context_operator(Family::FamilyA), b);
  for (const auto* op : {&token_only, &task_ctx}) {
    const auto eb = op->effective_bounds(w.teachers());
    const WeightBounds loose{eb.lo, eb.hi, 1000.0};
    const auto r = check_conformance(op->as_weight_fn(), Scale::Token, w, loose, rng, 300);
    CHECK(r.normalization.pass);
    CHECK(r.positivity.pass);
    CHECK(r.boundedness.pass);
  }
  const auto only = token_only.weights(w, 0, 3, 0, 0);
  const auto direct = make_token_operator(Family::FamilyA)->weights(w, {0, 3, 0}, b);
  CHECK(max_abs_diff(only, direct) <= 1e-12);
}
