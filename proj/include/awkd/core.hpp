#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "awkd/error.hpp"

namespace awkd {

/// Numeric tolerances shared by validation code. Defaults follow the
/// construction (1e-12) and normalization (1e-9) conventions used throughout.
struct Tolerances {
  double construction = 1e-12;
  double normalization = 1e-9;
};

/// Validated probability vector over a finite vocabulary.
class TokenDistribution {
 public:
  TokenDistribution() = default;

  std::span<const double> probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }

 private:
  explicit TokenDistribution(std::vector<double> p) : probs_(std::move(p)) {}
  friend TokenDistribution validate_distribution(std::span<const double>, std::size_t,
                                                 const Tolerances&);

  std::vector<double> probs_;
};

/// Throws NegativeMass for entries below -tol.construction, NotNormalized when
/// |sum - 1| > tol.normalization, DimensionMismatch when expected_size != 0 and
/// differs from p.size(). Entries in [-tol.construction, 0) are clamped to 0.
TokenDistribution validate_distribution(std::span<const double> p, std::size_t expected_size = 0,
                                        const Tolerances& tol = {});

/// Shannon entropy in nats with 0 ln 0 := 0.
double entropy(std::span<const double> p);
inline double entropy(const TokenDistribution& p) { return entropy(p.probs()); }

/// -sum q_i ln p_i. Infinite when q puts mass where p has none.
double cross_entropy(std::span<const double> q, std::span<const double> p);
/// KL(q || p) in nats.
double kl_divergence(std::span<const double> q, std::span<const double> p);
double total_variation(std::span<const double> a, std::span<const double> b);

/// Numerically stable softmax; `out` must have logits.size() entries.
void softmax_into(std::span<const double> logits, std::span<double> out);
std::vector<double> softmax(std::span<const double> logits);

double max_abs_diff(std::span<const double> a, std::span<const double> b);

struct VocabularySpec {
  int size = 0;
  std::vector<int> safety_tokens;

  bool is_safety_token(int token) const;
};

struct InputSpec {
  int id = 0;
  std::vector<double> features;
};

struct TaskInput {
  int input = 0;
  double weight = 0.0;
};

struct TaskSpec {
  int id = 0;
  double importance = 0.0;
  std::vector<TaskInput> inputs;
};

struct ContextSpec {
  int id = 0;
  std::vector<double> features;
  double measure_weight = 0.0;
  bool safety_critical = false;
};

/// K lookup-table teachers: one distribution per (input id, context id) and
/// teacher, plus per-task performance scores and per-teacher safety scores.
class TeacherBank {
 public:
  TeacherBank() = default;
  explicit TeacherBank(int teachers);

  int teachers() const noexcept { return teachers_; }

  void set(int input, int context, std::vector<TokenDistribution> dists);
  bool contains(int input, int context) const;
  const std::vector<TokenDistribution>& at(int input, int context) const;

  void set_performance(int task, std::vector<double> scores);
  bool has_performance(int task) const;
  const std::vector<double>& performance(int task) const;

  void set_safety_scores(std::vector<double> scores);
  bool has_safety_scores() const noexcept { return !safety_.empty(); }
  const std::vector<double>& safety_scores() const;

  const std::map<std::pair<int, int>, std::vector<TokenDistribution>>& table() const noexcept {
    return table_;
  }

 private:
  int teachers_ = 0;
  std::map<std::pair<int, int>, std::vector<TokenDistribution>> table_;
  std::map<int, std::vector<double>> performance_;
  std::vector<double> safety_;
};

struct WeightBounds {
  double w_min = 0.0;
  double w_max = 1.0;
  double lipschitz = 1.0;

  bool feasible(int teachers) const noexcept;
  /// Throws InfeasibleBounds naming the offending values.
  void check_feasible(int teachers) const;
};

using WeightVector = std::vector<double>;

/// Support point of the joint sampling measure P(t, x, c) = lambda_t * D_t(x) * mu(c).
/// Indices refer to positions in World::tasks / inputs / contexts.
struct WorldPoint {
  std::size_t task = 0;
  std::size_t input = 0;
  std::size_t context = 0;
  double prob = 0.0;
};

/// The finite experimental world: vocabulary, inputs, tasks, contexts and the
/// teacher bank. Immutable once validated.
struct World {
  VocabularySpec vocab;
  std::vector<InputSpec> inputs;
  std::vector<TaskSpec> tasks;
  std::vector<ContextSpec> contexts;
  TeacherBank bank;
  Tolerances tol;

  int teachers() const noexcept { return bank.teachers(); }

  std::size_t input_index(int id) const;
  std::size_t task_index(int id) const;
  std::size_t context_index(int id) const;

  /// Every structural problem found, empty when the world is consistent.
  std::vector<std::string> validate() const;
  /// Throws InvalidArgument listing validate() issues.
  void check() const;

  /// All (t, x, c) with positive probability, in task/input/context order.
  std::vector<WorldPoint> support() const;
  /// Marginal probability of each input (indexed like `inputs`).
  std::vector<double> input_marginal() const;
};

/// Deterministic random source: std::mt19937_64 plus hand-written transforms so
/// draws are identical across standard libraries. Single owner; never share.
class Sampler {
 public:
  explicit Sampler(std::uint64_t seed);

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  std::size_t index(std::size_t n);
  /// Inverse-CDF draw; weights need not be normalized but must be nonnegative.
  std::size_t categorical(std::span<const double> weights);
  double normal();
  /// Task by importance, then input by the task's sampling weights, then context by measure.
  WorldPoint sample_point(const World& world);
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

Sampler seeded_sampler(std::uint64_t seed);

/// Tabular softmax student: one logit vector per input (indexed like World::inputs).
struct StudentParams {
  std::vector<std::vector<double>> logits;
  double ridge = 0.0;

  static StudentParams zeros(const World& world, double ridge = 0.0);
  double squared_norm() const;
};

/// Parameters for synthetic toy worlds. Teacher distributions are
/// softmax(logit_scale * N(0, 1)) draws; scores are uniform on their ranges.
struct WorldGenSpec {
  int teachers = 3;
  int vocab = 10;
  int inputs = 8;
  int tasks = 2;
  int contexts = 2;
  std::vector<int> safety_tokens;
  std::vector<int> safety_contexts;
  double logit_scale = 1.0;
  int feature_dim = 2;
  std::uint64_t seed = 0;
};

World generate_world(const WorldGenSpec& spec);

}  // namespace awkd
