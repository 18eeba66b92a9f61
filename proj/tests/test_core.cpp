#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "awkd/core.hpp"
#include "test_util.hpp"

using namespace awkd;
using doctest::Approx;

TEST_CASE("validate_distribution accepts point masses and the confident teacher") {
  const std::vector<double> point{1.0, 0.0, 0.0};
  CHECK(validate_distribution(point).size() == 3);
  const std::vector<double> confident{0.8, 0.15, 0.05};
  const auto d = validate_distribution(confident);
  CHECK(d[0] == 0.8);
}

TEST_CASE("validate_distribution rejects bad vectors with typed errors") {
  auto code_of = [](std::vector<double> p, std::size_t n = 0) {
    try {
      validate_distribution(p, n);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  CHECK(code_of({0.5, 0.6, -0.1}) == ErrorCode::NegativeMass);
  CHECK(code_of({0.5, 0.6}) == ErrorCode::NotNormalized);
  CHECK(code_of({0.5, 0.5}, 3) == ErrorCode::DimensionMismatch);
}

TEST_CASE("validate_distribution clamps entries within construction tolerance") {
  const std::vector<double> p{1.0 + 5e-13, -5e-13};
  const auto d = validate_distribution(p);
  CHECK(d[1] == 0.0);
}

TEST_CASE("entropy in nats") {
  const std::vector<double> point{1.0, 0.0, 0.0};
  CHECK(entropy(point) == 0.0);
  const std::vector<double> third{1.0 / 3, 1.0 / 3, 1.0 / 3};
  CHECK(entropy(third) == Approx(std::log(3.0)).epsilon(1e-12));
  const std::vector<double> confident{0.8, 0.15, 0.05};
  const double oracle = -(0.8 * std::log(0.8) + 0.15 * std::log(0.15) + 0.05 * std::log(0.05));
  CHECK(entropy(confident) == Approx(oracle).epsilon(1e-14));
  CHECK(entropy(confident) == Approx(0.61287).epsilon(1e-5));
  const std::vector<double> hedging{0.4, 0.35, 0.25};
  CHECK(entropy(hedging) == Approx(1.08053).epsilon(1e-5));
}

TEST_CASE("property: entropy is permutation invariant and within [0, ln V]") {
  Sampler rng(11);
  for (int n = 0; n < 200; ++n) {
    const int v = 2 + static_cast<int>(rng.index(9));
    std::vector<double> logits(static_cast<std::size_t>(v));
    for (auto& l : logits) l = 3.0 * rng.normal();
    auto p = softmax(logits);
    const double h = entropy(p);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(static_cast<double>(v)) + 1e-12);
    std::reverse(p.begin(), p.end());
    CHECK(entropy(p) == Approx(h).epsilon(1e-12));
  }
}

TEST_CASE("cross entropy, KL and total variation") {
  const std::vector<double> q{0.6, 0.25, 0.15};
  const std::vector<double> u{1.0 / 3, 1.0 / 3, 1.0 / 3};
  CHECK(cross_entropy(q, u) == Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(kl_divergence(q, q) == Approx(0.0));
  CHECK(kl_divergence(q, u) == Approx(std::log(3.0) - entropy(q)).epsilon(1e-12));
  CHECK(total_variation(q, u) == Approx(0.5 * (0.6 - 1.0 / 3 + 1.0 / 3 - 0.25 + 1.0 / 3 - 0.15)));
  const std::vector<double> hole{1.0, 0.0, 0.0};
  CHECK(std::isinf(cross_entropy(q, hole)));
}

TEST_CASE("softmax is stable and normalized") {
  const std::vector<double> big{1000.0, 1000.0};
  const auto p = softmax(big);
  CHECK(p[0] == Approx(0.5));
  const std::vector<double> mixed{0.0, std::log(3.0)};
  const auto r = softmax(mixed);
  CHECK(r[1] == Approx(0.75).epsilon(1e-14));
}

TEST_CASE("weight bounds feasibility") {
  CHECK(WeightBounds{0.05, 0.95, 1}.feasible(3));
  CHECK_FALSE(WeightBounds{0.4, 0.95, 1}.feasible(3));   // K w_min > 1
  CHECK_FALSE(WeightBounds{0.05, 0.3, 1}.feasible(3));   // K w_max < 1
  CHECK_FALSE(WeightBounds{0.6, 0.5, 1}.feasible(2));
  try {
    WeightBounds{0.4, 0.95, 1}.check_feasible(3);
    FAIL("expected InfeasibleBounds");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InfeasibleBounds);
    CHECK(std::string(e.what()).find("0.4") != std::string::npos);
  }
}

TEST_CASE("sampler is deterministic per seed") {
  Sampler a(0), b(0), c(1);
  const double a1 = a.uniform(), a2 = a.uniform();
  CHECK(a1 == b.uniform());
  CHECK(a2 == b.uniform());
  CHECK(a1 != c.uniform());
  CHECK(seeded_sampler(5).uniform() == Sampler(5).uniform());
}

TEST_CASE("sampler frequencies match the declared measure within 1%") {
  World w;
  w.vocab = {2, {}};
  w.inputs = {{0, {}}, {1, {}}, {2, {}}};
  w.tasks = {{0, 0.7, {{0, 0.5}, {1, 0.5}}}, {1, 0.3, {{1, 0.2}, {2, 0.8}}}};
  w.contexts = {{0, {}, 0.25, false}, {1, {}, 0.75, true}};
  w.bank = TeacherBank(1);
  for (int x = 0; x < 3; ++x) {
    for (int c = 0; c < 2; ++c) w.bank.set(x, c, {test::dist({0.5, 0.5})});
  }
  w.check();
  Sampler rng(3);
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, double> freq;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto p = rng.sample_point(w);
    freq[{p.task, p.input, p.context}] += 1.0 / n;
  }
  for (const auto& s : w.support()) {
    CHECK(std::abs(freq[{s.task, s.input, s.context}] - s.prob) <= 0.01);
  }
  double total = 0.0;
  for (const auto& s : w.support()) total += s.prob;
  CHECK(total == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("world validation reports structural problems") {
  auto w = test::two_teacher_world();
  CHECK(w.validate().empty());
  w.tasks[0].inputs.push_back({42, 0.0});
  CHECK_FALSE(w.validate().empty());
  CHECK_THROWS_AS(w.check(), Error);
}

TEST_CASE("generated toy world has the requested shape and is reproducible") {
  const auto w = test::toy_world();
  CHECK(w.teachers() == 3);
  CHECK(w.vocab.size == 10);
  CHECK(w.inputs.size() == 8);
  CHECK(w.tasks.size() == 2);
  CHECK(w.contexts.size() == 2);
  CHECK(w.contexts[1].safety_critical);
  CHECK(w.validate().empty());
  const auto again = test::toy_world();
  CHECK(again.bank.at(0, 0)[0][3] == w.bank.at(0, 0)[0][3]);
}

TEST_CASE("student params") {
  const auto w = test::toy_world();
  auto s = StudentParams::zeros(w, 0.01);
  CHECK(s.logits.size() == 8);
  CHECK(s.squared_norm() == 0.0);
  s.logits[0][0] = 3.0;
  s.logits[1][2] = 4.0;
  CHECK(s.squared_norm() == 25.0);
}
