#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "subdyn/errors.hpp"

namespace subdyn::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Process exit codes. Every failure path maps to exactly one of these.
enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kNoConvergence = 10,
  kSingularOmega = 11,
  kNearSingularResolvent = 12,
  kVanishingTrace = 13,
  kNonCommutingNumber = 14,
  kSingularH1 = 15,
  kTooLarge = 16,
  kSingularDenominator = 17,
  kNotHermitian = 18,
  kDimensionMismatch = 19,
  kParseError = 20,
  kBlockStructureViolation = 21,
  kEmptyInterface = 22,
  kFileNotFound = 66,
  kInternal = 70,
};

int exit_code_for(ErrorKind kind);

/// Bad flags or flag combinations; exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A referenced input file does not exist; exit code 66.
class FileNotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Command { Solve, Ensemble, Tree, Anderson, Sweep };
std::string to_string(Command c);

struct SharedOptions {
  std::string out;
  std::string envelope;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  double tol = 1e-12;
  int max_iter = 1000;
  bool timing = false;
};

struct SolveOptions {
  std::string hamiltonian;
  std::string projector;
  double damping = 0.5;
  double epsilon = 0.0;
};

struct EnsembleOptions {
  std::string theta;
  std::string hamiltonian;
  std::string projector;
  double beta = 1.0;
  std::optional<double> mu;
  std::string numbers;
  /// Level whose energy is the force parameter y; -1 shifts every level.
  int force_level = -1;
};

struct TreeOptions {
  int m = 3;
  long steps = 1000;
  double beta = 0.5;
  std::string mode = "shifted";
  std::string energy_dist = "uniform:0,1";
  std::string shift_dist = "uniform:0,1";
  bool invert_sign = false;
  std::string edges;
};

struct AndersonOptions {
  double ed = -5.0;
  double ef = 0.0;
  double u = 10.0;
  double gamma = 0.1;
  double lambda = 0.0;
  double beta = 1.0;
  double gamma_factor = 1.0;
  std::optional<double> v;
  std::optional<double> rho0;
  std::string bath;
  int bath_size = 0;
  std::string scan;
};

struct SweepOptions {
  std::string target;
  std::vector<std::string> ranges;
};

struct RunConfig {
  Command command = Command::Solve;
  SharedOptions shared;
  SolveOptions solve;
  EnsembleOptions ensemble;
  TreeOptions tree;
  AndersonOptions anderson;
  SweepOptions sweep;
  /// Fully resolved configuration in the config-file format; feeding it back
  /// through --config reproduces the run.
  std::string echo;
};

/// `name=start:stop:step` expanded to floor((stop-start)/step + 1e-9) + 1 values.
struct Range {
  std::string name;
  std::vector<double> values;
};
Range parse_range(const std::string& text);

/// Parses argv (including argv[0]). Throws UsageError or FileNotFound.
/// Returns std::nullopt when help or version output was requested; that text
/// goes to `out`.
std::optional<RunConfig> parse_config(int argc, const char* const* argv, std::ostream& out);

/// Executes a parsed configuration, writing artifacts and the envelope.
int run(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// parse_config + run with every failure mapped to its exit code.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace subdyn::cli
