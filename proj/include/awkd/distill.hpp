#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "awkd/composition.hpp"
#include "awkd/core.hpp"

namespace awkd {

struct TrainerConfig {
  double eta0 = 1.0;
  long steps = 50000;
  double ridge = 0.01;
  std::uint64_t seed = 0;
  long eval_every = 100;

  void check() const;
};

struct TraceRecord {
  long step = 0;
  double loss = 0.0;
  double mean_kl = 0.0;
  double grad_norm = 0.0;
  double lr = 0.0;

  bool operator==(const TraceRecord&) const = default;
};

struct TrainTrace {
  std::vector<TraceRecord> records;

  /// Columns step, loss, mean_kl, grad_norm, lr; 17 significant digits.
  void write_csv(std::ostream& out) const;
  bool operator==(const TrainTrace&) const = default;
};

/// Gradient over the tabular student, shaped like StudentParams::logits.
using LogitGradient = std::vector<std::vector<double>>;

struct TargetPoint {
  std::size_t task = 0;
  std::size_t input = 0;
  std::size_t context = 0;
  double prob = 0.0;
  std::vector<double> q;
};

/// Distillation targets at every support point of the sampling measure plus
/// the per-input aggregates a_x (input mass) and q_bar_x (mass-weighted target).
class TargetTable {
 public:
  static TargetTable adaptive(const World& world, const UnifiedWeightOperator& op);
  /// Plain 1/K teacher averages, computed without any weight operator.
  static TargetTable classic(const World& world);
  static TargetTable from_points(const World& world, std::vector<TargetPoint> points);

  const std::vector<TargetPoint>& points() const noexcept { return points_; }
  double input_mass(std::size_t x) const { return mass_[x]; }
  const std::vector<double>& input_target(std::size_t x) const { return qbar_[x]; }
  std::size_t inputs() const noexcept { return mass_.size(); }
  /// Index into points() of (task, input, context) positions; throws when off-support.
  std::size_t locate(const WorldPoint& p) const;

 private:
  std::vector<TargetPoint> points_;
  std::vector<double> mass_;
  std::vector<std::vector<double>> qbar_;
  std::vector<long> lookup_;
  std::size_t n_inputs_ = 0;
  std::size_t n_contexts_ = 0;
};

/// E_{t,x,c} CE(q, softmax(theta_x)) + (ridge/2) |theta|^2. Throws MissingLogits.
double kd_loss(const StudentParams& theta, const World& world, const TargetTable& targets);
double kd_loss(const StudentParams& theta, const UnifiedWeightOperator& op, const World& world);
/// a_x (softmax(theta_x) - q_bar_x) + ridge * theta_x.
LogitGradient kd_gradient(const StudentParams& theta, const World& world, const TargetTable& targets);
LogitGradient kd_gradient(const StudentParams& theta, const UnifiedWeightOperator& op, const World& world);
/// sum_x a_x KL(q_bar_x || softmax(theta_x)).
double mean_kl(const StudentParams& theta, const TargetTable& targets);
double gradient_norm(const LogitGradient& g);

struct TrainResult {
  StudentParams theta;
  TrainTrace trace;
};

/// Single-sample SGD with eta_t = eta0 / (1 + t). Records step 0 and every
/// eval_every updates (and the final step). Throws NonFiniteLoss.
TrainResult sgd_train(const TrainerConfig& config, const UnifiedWeightOperator& op, const World& world);
TrainResult sgd_train(const TrainerConfig& config, const World& world, const TargetTable& targets);
/// Reference trainer for uniform-weight distillation.
TrainResult classic_uniform_kd_train(const TrainerConfig& config, const World& world);

/// As sgd_train, but every weight evaluation gets i.i.d. noise uniform on
/// [-delta, delta] per teacher and is renormalized. Throws MarginViolated when
/// some clean weight lies outside [w_min + delta, w_max - delta].
TrainResult noisy_weight_train(const TrainerConfig& config, const UnifiedWeightOperator& op, const World& world,
                               double delta);

struct RateFit {
  double slope = 0.0;
  double constant = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

/// Least squares of ln(loss - loss_star) on ln(step) over the tail half of the
/// records with step > 0 and loss > loss_star. Throws InsufficientTrace when
/// fewer than 10 such records exist.
RateFit fit_convergence_rate(const TrainTrace& trace, double loss_star);

/// Pointwise mean of traces recorded at identical steps.
TrainTrace average_traces(const std::vector<TrainTrace>& traces);

struct Objective {
  std::function<double(const StudentParams&)> value;
  std::function<LogitGradient(const StudentParams&)> gradient;
};

struct DescentResult {
  StudentParams theta;
  double value = 0.0;
  double grad_norm = 0.0;
  long iterations = 0;
  bool converged = false;
};

/// Gradient descent with Armijo backtracking and step growth, stopping at
/// gradient norm <= grad_tol.
DescentResult full_batch_descent(const Objective& objective, StudentParams theta, double grad_tol,
                                 long max_iters = 200000);
DescentResult minimize_kd(const World& world, const TargetTable& targets, double ridge, double grad_tol,
                          long max_iters = 200000);

}  // namespace awkd
