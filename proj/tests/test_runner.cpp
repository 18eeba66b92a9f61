#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "awkd/runner.hpp"

using namespace awkd;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs{AWKD_CONFIG_DIR};
const fs::path kData{AWKD_TEST_DATA_DIR};

ErrorCode parse_code(const fs::path& p) {
  try {
    parse_config(p);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

fs::path scratch_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("awkd-test-" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("bundled configs cover every experiment kind and parse") {
  for (auto k : all_kinds()) {
    const auto path = kConfigs / (std::string(to_string(k)) + ".json");
    CAPTURE(path.string());
    REQUIRE(fs::exists(path));
    const auto cfg = parse_config(path);
    CHECK(cfg.kind == k);
    CHECK(cfg.hash.size() == 16);
  }
}

TEST_CASE("appendix_a config parses to the two-teacher three-token world") {
  const auto cfg = parse_config(kConfigs / "appendix_a.json");
  CHECK(cfg.world.teachers() == 2);
  CHECK(cfg.world.vocab.size == 3);
  CHECK(cfg.world.bank.at(0, 0)[0][0] == 0.8);
  CHECK(cfg.world.bank.safety_scores()[1] == 0.6);
  CHECK(cfg.safety.label(0, 0) == 0);
}

TEST_CASE("config errors carry the right codes") {
  CHECK(parse_code(kData / "infeasible_bounds.json") == ErrorCode::InfeasibleBounds);
  CHECK(parse_code(kData / "missing_teacher.json") == ErrorCode::UnresolvedReference);
  CHECK(parse_code(kData / "malformed.json") == ErrorCode::ParseError);
  CHECK(parse_code(kData / "unknown_kind.json") == ErrorCode::ParseError);
  CHECK(parse_code(kData / "negative_mass.json") == ErrorCode::ParseError);
  CHECK(parse_code(kData / "does_not_exist.json") == ErrorCode::IoError);
  try {
    parse_config(kData / "infeasible_bounds.json");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("0.6") != std::string::npos);
  }
  try {
    parse_config(kData / "missing_teacher.json");
  } catch (const ConfigError& e) {
    CHECK(e.issues().size() >= 2);
    CHECK(std::string(e.what()).find("ghost") != std::string::npos);
  }
}

TEST_CASE("seed override changes the seed and the hash") {
  const auto a = parse_config(kConfigs / "train.json");
  const auto b = parse_config(kConfigs / "train.json", 1234);
  const auto c = parse_config(kConfigs / "train.json");
  CHECK(b.seed == 1234);
  CHECK(b.trainer.seed == 1234);
  CHECK(a.hash == c.hash);
  CHECK(a.hash != b.hash);
}

TEST_CASE("appendix_a run passes and reports the adaptive ensemble") {
  const auto rec = run_experiment(parse_config(kConfigs / "appendix_a.json"));
  CHECK(rec.all_pass());
  CHECK(rec.assertion("appendix_a.weights").pass);
  std::ostringstream human;
  const auto out = scratch_dir("appendix");
  emit_summary(rec, out, human);
  CHECK(human.str().find("q_adaptive(a) = 0.676") != std::string::npos);
  CHECK(human.str().find("0.68") != std::string::npos);
  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  CHECK(summary.size() == 3);
  CHECK(summary.contains("config_hash"));
  CHECK(summary["kind"] == "appendix_a");
  for (const auto& a : summary["assertions"]) {
    CHECK(a.size() == 5);
    CHECK(a.contains("name"));
    CHECK(a.contains("expected"));
    CHECK(a.contains("measured"));
    CHECK(a.contains("tol"));
    CHECK(a.contains("pass"));
  }
  CHECK(fs::exists(out / "appendix_a.csv"));
}

TEST_CASE("train run with uniform operators matches the classic trainer") {
  auto cfg = parse_config(kConfigs / "train.json");
  cfg.trainer.steps = 2000;
  const auto rec = run_experiment(cfg);
  CHECK(rec.assertion("train.uniform_matches_classic").pass);
  const auto out = scratch_dir("train");
  std::ostringstream sink;
  emit_summary(rec, out, sink, true);
  CHECK(sink.str().empty());
  const auto csv = slurp(out / "trace.csv");
  CHECK(csv.rfind("step,loss,mean_kl,grad_norm,lr\n", 0) == 0);
  CHECK(csv.find("2000,") != std::string::npos);
}

TEST_CASE("conformance failures name the axiom, the violation and the point") {
  auto cfg = parse_config(kConfigs / "conformance.json");
  cfg.bounds.lipschitz = 1e-6;
  cfg.params.families = {Family::FamilyA};
  cfg.params.samples = 200;
  const auto rec = run_experiment(cfg);
  const auto& a = rec.assertion("conformance.A.token");
  CHECK_FALSE(a.pass);
  CHECK(a.detail.find("regularity worst violation") != std::string::npos);
  CHECK(a.detail.find("(input ") != std::string::npos);
  std::ostringstream human;
  emit_summary(rec, scratch_dir("conformance"), human);
  CHECK(human.str().find("FAIL conformance.A.token") != std::string::npos);
}

TEST_CASE("empty records are refused") {
  RunRecord empty;
  std::ostringstream sink;
  CHECK_THROWS_AS(emit_summary(empty, scratch_dir("empty"), sink), Error);
}

TEST_CASE("output directory precedence") {
  auto cfg = parse_config(kConfigs / "appendix_a.json");
  ::unsetenv("AWKD_OUT");
  CHECK(resolve_output_dir({}, cfg) == fs::path("awkd-out"));
  ::setenv("AWKD_OUT", "from-env", 1);
  CHECK(resolve_output_dir({}, cfg) == fs::path("from-env"));
  cfg.output = "from-config";
  CHECK(resolve_output_dir({}, cfg) == fs::path("from-config"));
  CHECK(resolve_output_dir(std::string("from-flag"), cfg) == fs::path("from-flag"));
  ::unsetenv("AWKD_OUT");
}

TEST_CASE("kind names round-trip") {
  CHECK(all_kinds().size() == 9);
  for (auto k : all_kinds()) CHECK(kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(kind_from_string("nope"), Error);
}

TEST_CASE("format_double keeps 17 significant digits") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(std::stod(format_double(1.0 / 3)) == 1.0 / 3);
}
