#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "awkd/operators.hpp"
#include "test_util.hpp"

using namespace awkd;
using doctest::Approx;

namespace {

const WeightBounds kWide{0.01, 0.99, 10.0};

double pop_variance(const std::vector<double>& p) {
  double mean = 0.0;
  for (double e : p) mean += e;
  mean /= static_cast<double>(p.size());
  double v = 0.0;
  for (double e : p) v += (e - mean) * (e - mean);
  return v / static_cast<double>(p.size());
}

World identical_teachers(std::vector<double> safety) {
  auto w = test::two_teacher_world();
  const auto p = test::dist({0.5, 0.3, 0.2});
  w.bank.set(0, 0, {p, p});
  w.bank.set_safety_scores(std::move(safety));
  return w;
}

}  // namespace

TEST_CASE("clip_normalize examples") {
  const std::vector<double> even{1, 1};
  auto w = clip_normalize(even, {0.2, 0.8, 1});
  CHECK(w[0] == Approx(0.5));
  CHECK(w[1] == Approx(0.5));

  const std::vector<double> skew{0.95, 0.05};
  w = clip_normalize(skew, {0.2, 0.8, 1});
  CHECK(w[0] == Approx(0.8).epsilon(1e-12));
  CHECK(w[1] == Approx(0.2).epsilon(1e-12));

  const std::vector<double> four{9, 1, 1, 1};
  w = clip_normalize(four, {0.05, 0.5, 1});
  CHECK(w[0] == Approx(0.5).epsilon(1e-12));
  for (int k = 1; k < 4; ++k) CHECK(w[static_cast<std::size_t>(k)] == Approx(1.0 / 6).epsilon(1e-12));
}

TEST_CASE("clip_normalize errors") {
  const std::vector<double> raw{1, 1, 1};
  CHECK_THROWS_AS(clip_normalize(raw, {0.4, 0.9, 1}), Error);
  const std::vector<double> zero{0, 0};
  try {
    clip_normalize(zero, {0.1, 0.9, 1});
    FAIL("expected ZeroMass");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroMass);
  }
}

TEST_CASE("property: clip_normalize is idempotent, normalized and bounded") {
  Sampler rng(21);
  for (int n = 0; n < 500; ++n) {
    const int k = 2 + static_cast<int>(rng.index(6));
    const double lo = 0.5 * rng.uniform() / k;
    const double hi = 1.0 / k + (1.0 - 1.0 / k) * rng.uniform();
    const WeightBounds b{lo, hi, 1};
    std::vector<double> raw(static_cast<std::size_t>(k));
    for (auto& r : raw) r = std::exp(3.0 * rng.normal());
    const auto once = clip_normalize(raw, b);
    const auto twice = clip_normalize(once, b);
    CHECK(max_abs_diff(once, twice) <= 1e-12);
    CHECK(test::sum(once) == Approx(1.0).epsilon(1e-12));
    for (double v : once) {
      CHECK(v >= lo - 1e-15);
      CHECK(v <= hi + 1e-15);
    }
  }
}

TEST_CASE("inverse-entropy weights from given entropies") {
  const std::vector<double> given{0.68, 1.52};
  const auto w = inverse_entropy_weights(given, {0.05, 0.95, 10});
  CHECK(w[0] == Approx(1.52 / (0.68 + 1.52)).epsilon(1e-12));
  CHECK(std::abs(w[0] - 0.69) <= 0.005);
  CHECK(std::abs(w[1] - 0.31) <= 0.005);

  const std::vector<double> nats{0.61287, 1.08055};
  const auto r = inverse_entropy_weights(nats, {0.05, 0.95, 10});
  CHECK(r[0] == Approx(1.08055 / (0.61287 + 1.08055)).epsilon(1e-12));
  CHECK(r[0] == Approx(0.638).epsilon(1e-3));
}

TEST_CASE("inverse-entropy weights do not depend on the log base") {
  const std::vector<double> nats{0.61287, 1.08055, 0.9};
  std::vector<double> bits;
  for (double h : nats) bits.push_back(h / std::log(2.0));
  CHECK(max_abs_diff(inverse_entropy_weights(nats, kWide), inverse_entropy_weights(bits, kWide)) <= 1e-12);
}

TEST_CASE("token inverse-entropy on the teacher pair") {
  const auto w = test::two_teacher_world();
  const auto r = token_weights_inverse_entropy(w, {0, 1, 0}, {0.05, 0.95, 10});
  const double h1 = entropy(w.bank.at(0, 0)[0]), h2 = entropy(w.bank.at(0, 0)[1]);
  CHECK(r[0] == Approx(h2 / (h1 + h2)).epsilon(1e-12));
  const auto same = identical_teachers({0.5, 0.5});
  const auto u = token_weights_inverse_entropy(same, {0, 1, 0}, {0.05, 0.95, 10});
  CHECK(u[0] == Approx(0.5));
}

TEST_CASE("Family A token weights") {
  const auto w = test::two_teacher_world();
  const auto a = token_weights_family_a(w, {0, 1, 0}, kWide, 1.0);
  const double e1 = std::exp(-0.612869), e2 = std::exp(-1.080548);
  CHECK(a[0] == Approx(e1 / (e1 + e2)).epsilon(1e-5));
  CHECK(a[0] == Approx(0.6148).epsilon(1e-4));
  CHECK(a[1] == Approx(0.3852).epsilon(1e-4));

  const auto flat = token_weights_family_a(w, {0, 1, 0}, kWide, 1e-9);
  CHECK(std::abs(flat[0] - 0.5) <= 1e-6);

  const auto same = identical_teachers({0.9, 0.1});
  const auto s = token_weights_family_a(same, {0, 0, 0}, kWide, 1.0);
  CHECK(s[0] > s[1]);
}

TEST_CASE("Family B token weights against an independent variance oracle") {
  const auto w = test::two_teacher_world();
  const double v1 = pop_variance({0.8, 0.15, 0.05});
  const double v2 = pop_variance({0.4, 0.35, 0.25});
  CHECK(v1 == Approx(0.110556).epsilon(1e-5));
  CHECK(v2 == Approx(0.003889).epsilon(1e-3));
  CHECK(probability_variance(w.bank.at(0, 0)[0].probs()) == Approx(v1).epsilon(1e-14));
  const double r1 = 1.0 / (v1 + 1e-6), r2 = 1.0 / (v2 + 1e-6);
  const auto b = token_weights_family_b(w, {0, 1, 0}, kWide);
  CHECK(b[0] == Approx(r1 / (r1 + r2)).epsilon(1e-12));
  CHECK(std::abs(b[0] - 0.0339) <= 5e-4);
  CHECK(std::abs(b[1] - 0.9661) <= 5e-4);

  const auto clamped = token_weights_family_b(w, {0, 1, 0}, {0.2, 0.8, 10});
  CHECK(clamped[0] == Approx(0.2).epsilon(1e-12));
  CHECK(clamped[1] == Approx(0.8).epsilon(1e-12));

  const auto same = identical_teachers({0.5, 0.5});
  CHECK(token_weights_family_b(same, {0, 1, 0}, kWide)[0] == Approx(0.5));
}

TEST_CASE("Family C (task) performance softmax") {
  const auto w = test::two_teacher_world();
  const auto c = task_weights_performance(w, 0, kWide, 0.2);
  const double e1 = std::exp(4.5), e2 = std::exp(2.5);
  CHECK(c[0] == Approx(e1 / (e1 + e2)).epsilon(1e-12));
  CHECK(c[0] == Approx(0.8808).epsilon(1e-4));
  const auto hot = task_weights_performance(w, 0, kWide, 1e9);
  CHECK(std::abs(hot[0] - 0.5) <= 1e-6);
  auto tie = w;
  tie.bank.set_performance(0, {0.7, 0.7});
  CHECK(task_weights_performance(tie, 0, kWide, 0.2)[0] == Approx(0.5));
}

TEST_CASE("context safety weights") {
  auto w = test::two_teacher_world();
  w.bank.set_safety_scores({0.9, 0.3});
  const auto s = context_weights_safety(w, 0, {0.05, 0.95, 10});
  CHECK(s[0] == Approx((0.9 + 1e-6) / (1.2 + 2e-6)).epsilon(1e-12));
  CHECK(s[0] == Approx(0.75).epsilon(1e-5));
  w.contexts[0].safety_critical = false;
  CHECK(context_weights_safety(w, 0, {0.05, 0.95, 10})[0] == Approx(0.5));
  w.contexts[0].safety_critical = true;
  w.bank.set_safety_scores({0.4, 0.4});
  CHECK(context_weights_safety(w, 0, {0.05, 0.95, 10})[0] == Approx(0.5));
}

TEST_CASE("enforce_safety_order pools violators and keeps the sum") {
  std::vector<double> w{0.5, 0.3, 0.2};
  const std::vector<double> scores{0.1, 0.5, 0.9};
  enforce_safety_order(w, scores);
  CHECK(test::sum(w) == Approx(1.0));
  CHECK(w[0] <= w[1]);
  CHECK(w[1] <= w[2]);
  std::vector<double> tied{0.6, 0.4};
  const std::vector<double> same{0.5, 0.5};
  enforce_safety_order(tied, same);
  CHECK(tied[0] == Approx(0.5));
}

TEST_CASE("conformance: uniform passes, constructed violations fail") {
  const auto w = test::two_teacher_world();
  const WeightBounds b{0.05, 0.95, 10};
  Sampler rng(1);
  const auto uni = check_conformance(as_weight_fn(make_token_operator(Family::Uniform), b), Scale::Token, w, b, rng, 200);
  CHECK(uni.all_pass());

  WeightFn loose = [](const World&, const EvalPoint&) { return WeightVector{0.7, 0.7}; };
  const auto bad = check_conformance(loose, Scale::Token, w, b, rng, 50);
  CHECK_FALSE(bad.normalization.pass);
  CHECK(bad.normalization.worst_violation == Approx(0.4));

  // Hedging teacher made the safer one.
  auto swapped = w;
  swapped.bank.set_safety_scores({0.6, 0.9});
  OperatorParams raw;
  raw.safety_adjust = false;
  const auto unsafe = check_conformance(as_weight_fn(make_token_operator(Family::FamilyA, raw), b), Scale::Token,
                                        swapped, b, rng, 200);
  CHECK_FALSE(unsafe.safety.pass);
  const auto safe = check_conformance(as_weight_fn(make_token_operator(Family::FamilyA), b), Scale::Token, swapped,
                                      b, rng, 200);
  CHECK(safe.all_pass());
}

TEST_CASE("property: every built-in family conforms at every scale on the toy world") {
  const auto w = test::toy_world();
  const WeightBounds b{0.05, 0.95, 10};
  Sampler rng(2);
  for (Family f : {Family::Uniform, Family::InverseEntropy, Family::FamilyA, Family::FamilyB, Family::FamilyC}) {
    CAPTURE(to_string(f));
    CHECK(check_conformance(as_weight_fn(make_token_operator(f), b), Scale::Token, w, b, rng, 300).all_pass());
    CHECK(check_conformance(as_weight_fn(make_task_operator(f), b), Scale::Task, w, b, rng, 300).all_pass());
    CHECK(check_conformance(as_weight_fn(make_context_operator(f), b), Scale::Context, w, b, rng, 300).all_pass());
  }
}

TEST_CASE("non-uniqueness witness: Families A and B differ on the teacher pair") {
  const auto w = test::two_teacher_world();
  const WeightBounds b{0.05, 0.95, 10};
  const auto a = make_token_operator(Family::FamilyA)->weights(w, {0, 1, 0}, b);
  const auto bb = make_token_operator(Family::FamilyB)->weights(w, {0, 1, 0}, b);
  CHECK(max_abs_diff(a, bb) > 0.1);
  Sampler rng(4);
  CHECK(check_conformance(as_weight_fn(make_token_operator(Family::FamilyA), b), Scale::Token, w, b, rng, 1000)
            .all_pass());
  CHECK(check_conformance(as_weight_fn(make_token_operator(Family::FamilyB), b), Scale::Token, w, b, rng, 1000)
            .all_pass());
}

TEST_CASE("family names round-trip") {
  for (Family f : {Family::Uniform, Family::InverseEntropy, Family::FamilyA, Family::FamilyB, Family::FamilyC}) {
    CHECK(family_from_string(to_string(f)) == f);
  }
  CHECK(family_from_string("family_a") == Family::FamilyA);
  CHECK_THROWS_AS(family_from_string("zeta"), Error);
  CHECK_THROWS_AS(make_token_operator(Family::Custom), Error);
}

TEST_CASE("Pareto compatibility of scalarized minimizers") {
  const auto grid = make_grid_1d(-2.0, 2.0, 0.01);
  GridLoss l1 = [](std::span<const double> th) { return (th[0] - 1) * (th[0] - 1); };
  GridLoss l2 = [](std::span<const double> th) { return (th[0] + 1) * (th[0] + 1); };
  const std::vector<double> lambdas{1.0, 0.5, 0.0};
  const auto r = check_pareto_compat(grid, l1, l2, lambdas);
  CHECK(r.pass);
  REQUIRE(r.rows.size() == 3);
  CHECK(r.rows[0].minimizer[0] == Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(r.rows[1].minimizer[0]) <= 1e-9);
  for (const auto& row : r.rows) CHECK(row.nondominated);
}
