#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "awkd/composition.hpp"
#include "awkd/core.hpp"
#include "awkd/distill.hpp"
#include "awkd/dynamics.hpp"
#include "awkd/safety.hpp"

namespace awkd {

inline constexpr std::string_view kVersion = "0.1.0";

enum class ExperimentKind { Conformance, Train, Rate, FixedPoint, Perturbation, Variance, Safety, Pareto, AppendixA };

std::string_view to_string(ExperimentKind k) noexcept;
ExperimentKind kind_from_string(std::string_view name);
const std::vector<ExperimentKind>& all_kinds();

struct ScaleSelection {
  Family family = Family::Uniform;
  OperatorParams params;
};

/// Kind-specific knobs. Defaults are the acceptance settings.
struct KindParams {
  // conformance / variance
  std::size_t samples = 1000;
  std::vector<Family> families{Family::Uniform, Family::InverseEntropy, Family::FamilyA, Family::FamilyB,
                               Family::FamilyC};
  double time_limit = 0.0;  ///< seconds; 0 disables the runtime assertion

  // rate
  int seeds = 10;
  double kl_max = 1e-3;
  double slope_lo = -1.3;
  double slope_hi = -0.7;
  double fd_tol = 1e-6;
  int fd_draws = 100;
  double slope_agreement = 0.2;

  // fixed_point
  double beta = 0.3;
  double gain = 1.0;
  double tol = 1e-10;
  long max_iters = 10000;
  int starts = 10;
  std::size_t pairs = 2000;
  double uniqueness_tol = 1e-6;
  double control_tol = 1e-9;

  // perturbation
  std::vector<double> deltas{1e-3, 1e-2, 1e-1};
  double r2_min = 0.95;
  double ratio_max = 3.0;

  // variance
  std::size_t variance_samples = 10000;
  double equality_tol = 0.02;

  // safety
  std::optional<double> s_min_inactive;
  double kkt_tol = 1e-3;
  double jensen_tol = 1e-3;

  // pareto
  std::vector<double> mu_grid;

  // appendix_a
  std::vector<double> entropies{0.68, 1.52};
  std::vector<double> expected_weights{0.69, 0.31};
  double weight_tol = 0.005;
  std::vector<double> expected_uniform{0.6, 0.25, 0.15};
  std::vector<double> expected_adaptive{0.676, 0.212, 0.112};
  std::vector<double> reported_adaptive{0.68, 0.21, 0.11};
  double adaptive_tol = 1e-3;
  double reported_tol = 0.005;
  double min_gain = 0.07;
  double min_family_gap = 0.1;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Conformance;
  World world;
  WeightBounds bounds;
  ScaleSelection token, task, context;
  TrainerConfig trainer;
  SafetyConfig safety;
  bool has_safety = false;
  KindParams params;
  std::string output;
  std::uint64_t seed = 0;
  /// Hex FNV-1a of the canonical JSON document (after the seed override).
  std::string hash;

  UnifiedWeightOperator unified() const;
};

/// Configuration problems, all of them. code() is the first problem's code.
class ConfigError : public Error {
 public:
  ConfigError(ErrorCode code, std::vector<std::string> issues);
  const std::vector<std::string>& issues() const noexcept { return issues_; }

 private:
  std::vector<std::string> issues_;
};

/// Throws ConfigError (ParseError / UnresolvedReference / InfeasibleBounds)
/// listing every problem found, or IoError when the file cannot be read.
ExperimentConfig parse_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = {});
ExperimentConfig parse_config_text(std::string_view text, std::optional<std::uint64_t> seed_override = {});

struct Assertion {
  std::string name;
  double expected = 0.0;
  double measured = 0.0;
  double tol = 0.0;
  bool pass = false;
  std::string detail;
};

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

std::string format_double(double v);

struct RunRecord {
  std::string config_hash;
  std::string version{kVersion};
  std::string kind;
  std::string started;
  std::string finished;
  std::vector<Table> tables;
  std::vector<Assertion> assertions;

  bool all_pass() const noexcept;
  bool empty() const noexcept { return tables.empty() && assertions.empty(); }
  /// Throws InvalidArgument when absent.
  const Assertion& assertion(std::string_view name) const;
};

/// Runs the suite for config.kind. Module errors are rethrown with the kind
/// and config hash prepended.
RunRecord run_experiment(const ExperimentConfig& config);

/// Writes every table as <name>.csv and summary.json into out_dir and prints
/// one line per assertion to `human` (nothing when quiet). Throws IoError, and
/// InvalidArgument for an empty record.
void emit_summary(const RunRecord& record, const std::filesystem::path& out_dir, std::ostream& human,
                  bool quiet = false);

/// --out flag, else the config's output field, else $AWKD_OUT, else "awkd-out".
std::filesystem::path resolve_output_dir(const std::optional<std::string>& flag, const ExperimentConfig& config);

}  // namespace awkd
