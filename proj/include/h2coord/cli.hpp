#pragma once

// Batch front end. A run is described by one JSON document; every verb
// reads it, does its work and writes CSV files into the output directory.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "h2coord/coordination.hpp"
#include "h2coord/platoon.hpp"
#include "h2coord/sim.hpp"

namespace h2coord::cli {

inline constexpr const char* kToolVersion = "1.0.0";

/// Malformed or inconsistent configuration; `where` is the field path or a
/// line/column location.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

using Rows = std::vector<std::vector<double>>;

struct ConstraintConfig {
  std::string kind = "none";  // none | delay | zoh | opthold
  double h = 0.0;
  bool operator==(const ConstraintConfig&) const = default;
};

struct DisturbanceConfig {
  std::string kind = "impulse";  // none | impulse | noise | waveform
  int agent = 1;                 // 1-based
  int channel = 1;               // 1-based
  double time = 0.0;
  std::uint64_t seed = 0;
  double intensity = 1.0;
  std::vector<Rows> samples;  // waveform: samples[k] is r x nu at t = k dt
  bool operator==(const DisturbanceConfig&) const = default;
};

struct SimSection {
  double dt = 1e-2;
  double T = 10.0;
  DisturbanceConfig disturbance;
  bool operator==(const SimSection&) const = default;
};

struct ReferenceConfig {
  std::string kind = "constant";  // constant | ramp | sinusoid
  double value = 0.0;
  double start = 0.0;
  double speed = 1.0;
  double offset = 0.0;
  double amplitude = 1.0;
  double frequency = 1.0;
  double phase = 0.0;
  bool operator==(const ReferenceConfig&) const = default;
};

struct PlatoonConfig {
  int nu = 2;
  double kappa0 = 1.0;
  double kappa1 = 2.0;
  double q1 = 1.0;
  double q2 = 0.0;
  std::vector<double> delta;
  double h = 0.1;
  ReferenceConfig reference;
  std::vector<double> p0, v0;  // optional initial positions and speeds
  bool operator==(const PlatoonConfig&) const = default;
};

struct ProblemConfig {
  // Agent model; absent only in platoon-only documents.
  std::optional<Rows> A, Bw, Bu, Cz, Dzu;
  std::optional<int> nu;
  std::optional<std::vector<double>> mu;  // raw, normalized on use
  ConstraintConfig constraint;
  SimSection sim;
  std::optional<std::vector<double>> sweep_h;
  bool allow_singular_Bw = false;
  std::optional<PlatoonConfig> platoon;

  bool has_model() const { return A.has_value(); }
  bool operator==(const ProblemConfig&) const = default;
};

/// Schema-checked parse. Throws ConfigError.
ProblemConfig parse_config(const nlohmann::json& doc);
ProblemConfig parse_config_text(const std::string& text);
ProblemConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const ProblemConfig& config);

/// FNV-1a 64 of the canonical serialization, as 16 hex digits.
std::string config_hash(const ProblemConfig& config);

AgentModel to_model(const ProblemConfig& config);
ConstraintClass to_constraint(const ConstraintConfig& c);
/// Raw weights scaled to unit norm (zero entries kept; validate reports them).
Vec raw_unit_weights(const ProblemConfig& config);
sim::DisturbanceSpec to_disturbance(const SimSection& sim, std::optional<std::uint64_t> seed);
platoon::PlatoonSpec to_platoon(const PlatoonConfig& p);

struct RunOptions {
  std::filesystem::path out = ".";
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

/// Verbs; each returns the process exit code (0 success, 1 domain failure)
/// and throws ConfigError for problems with the document.
int cmd_validate(const ProblemConfig& config, const RunOptions& options, std::ostream& out);
int cmd_analyze(const ProblemConfig& config, const RunOptions& options, std::ostream& out);
int cmd_simulate(const ProblemConfig& config, const RunOptions& options, std::ostream& out);
int cmd_platoon(const ProblemConfig& config, const RunOptions& options, std::ostream& out);

/// Full command line entry point: exit 2 for usage and parse failures.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Writes `content` to `path` through a temporary file and a rename.
void write_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace h2coord::cli
