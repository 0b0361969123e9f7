#include <algorithm>
#include <cmath>
#include <map>
#include <filesystem>
#include <ostream>
#include <thread>

#include <CLI11.hpp>

#include "cli/cli.hpp"

namespace subdyn::cli {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BadConfig:
    case ErrorKind::IndexOutOfRange:
    case ErrorKind::EmptyOrFullSubspace: return kUsage;
    case ErrorKind::NoConvergence: return kNoConvergence;
    case ErrorKind::SingularOmega: return kSingularOmega;
    case ErrorKind::NearSingularResolvent: return kNearSingularResolvent;
    case ErrorKind::VanishingTrace: return kVanishingTrace;
    case ErrorKind::NonCommutingNumber: return kNonCommutingNumber;
    case ErrorKind::SingularH1: return kSingularH1;
    case ErrorKind::TooLarge: return kTooLarge;
    case ErrorKind::SingularDenominator: return kSingularDenominator;
    case ErrorKind::NotHermitian: return kNotHermitian;
    case ErrorKind::DimensionMismatch: return kDimensionMismatch;
    case ErrorKind::ParseError: return kParseError;
    case ErrorKind::BlockStructureViolation: return kBlockStructureViolation;
    case ErrorKind::EmptyInterface: return kEmptyInterface;
  }
  return kInternal;
}

std::string to_string(Command c) {
  switch (c) {
    case Command::Solve: return "solve";
    case Command::Ensemble: return "ensemble";
    case Command::Tree: return "tree";
    case Command::Anderson: return "anderson";
    case Command::Sweep: return "sweep";
  }
  return "?";
}

Range parse_range(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw UsageError("range '" + text + "' must look like name=start:stop:step");
  }
  Range r;
  r.name = text.substr(0, eq);
  const std::string spec = text.substr(eq + 1);
  double v[3];
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const auto next = spec.find(':', pos);
    if ((i < 2) == (next == std::string::npos)) {
      throw UsageError("range '" + text + "' must look like name=start:stop:step");
    }
    const std::string item = spec.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    try {
      std::size_t used = 0;
      v[i] = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("range '" + text + "' has a bad number '" + item + "'");
    }
    pos = next + 1;
  }
  const double start = v[0], stop = v[1], step = v[2];
  if (!std::isfinite(start) || !std::isfinite(stop) || !std::isfinite(step) || step <= 0.0 || stop < start) {
    throw UsageError("range '" + text + "' needs finite start <= stop and step > 0");
  }
  const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
  if (n > 10'000'000) throw UsageError("range '" + text + "' has too many points");
  for (long i = 0; i < n; ++i) r.values.push_back(start + static_cast<double>(i) * step);
  return r;
}

namespace {

void add_shared(CLI::App* sub, SharedOptions& s, bool with_threads, CLI::Option** seed_opt) {
  sub->add_option("--out,-o", s.out, "Output path (stdout when omitted)");
  sub->add_option("--envelope", s.envelope, "Write the result envelope here instead of stdout");
  *seed_opt = sub->add_option("--seed", "Random seed (64-bit unsigned)");
  if (with_threads) {
    sub->add_option("--threads", s.threads, "Worker threads")->check(CLI::PositiveNumber);
  } else {
    sub->add_option("--threads", s.threads, "Worker threads (only used by sweep)")->check(CLI::PositiveNumber);
  }
  sub->add_option("--tol", s.tol, "Convergence tolerance")->check(CLI::PositiveNumber);
  sub->add_option("--max-iter", s.max_iter, "Iteration limit")->check(CLI::PositiveNumber);
  sub->add_flag("--timing", s.timing, "Include wall time in the envelope");
}

void add_ensemble(CLI::App* sub, EnsembleOptions& e, CLI::Option** mu_opt) {
  sub->add_option("--theta", e.theta, "Comma-separated levels, e.g. 0,1+0.1i");
  *mu_opt = sub->add_option("--mu", "Chemical potential");
  sub->add_option("--numbers", e.numbers, "Number eigenvalues paired with --theta");
  sub->add_option("--force-level", e.force_level, "Level used as force parameter (-1: common shift)");
}

void add_anderson(CLI::App* sub, AndersonOptions& a, CLI::Option** v_opt, CLI::Option** rho_opt) {
  sub->add_option("--ed", a.ed, "Impurity level E_d");
  sub->add_option("--ef", a.ef, "Fermi level E_F");
  sub->add_option("--u", a.u, "On-site repulsion U")->check(CLI::NonNegativeNumber);
  sub->add_option("--gamma", a.gamma, "Resonance half-width")->check(CLI::NonNegativeNumber);
  sub->add_option("--gamma-factor", a.gamma_factor, "Factor on V^2 rho0 when Gamma is derived");
  *v_opt = sub->add_option("--v", "Hybridization V (with --rho0 derives Gamma)");
  *rho_opt = sub->add_option("--rho0", "Bath density of states at E_F");
}

template <class T>
std::optional<T> optional_value(const CLI::Option* opt) {
  if (opt == nullptr || opt->count() == 0) return std::nullopt;
  return opt->as<T>();
}

void require_file(const std::string& path, const std::string& flag) {
  if (!path.empty() && !std::filesystem::exists(path)) {
    throw FileNotFound(flag + ": no such file '" + path + "'");
  }
}

}  // namespace

std::optional<RunConfig> parse_config(int argc, const char* const* argv, std::ostream& out) {
  RunConfig cfg;
  CLI::App app{"Subdynamics collision operators, projected ensembles and model simulations", "subdyn"};
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "TOML configuration file; flags override its values");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.fallthrough(false);
  app.allow_config_extras(false);

  cfg.shared.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  std::map<std::string, CLI::Option*> seed_opts, mu_opts, v_opts, rho_opts;

  auto* solve = app.add_subcommand("solve", "Collision operator and similarity transform of a Hamiltonian");
  add_shared(solve, cfg.shared, false, &seed_opts["solve"]);
  solve->add_option("--hamiltonian", cfg.solve.hamiltonian, "Hamiltonian matrix JSON")->required();
  solve->add_option("--projector", cfg.solve.projector, "Comma-separated P-subspace indices")->required();
  solve->add_option("--damping", cfg.solve.damping, "Fixed-point damping in (0, 1]");
  solve->add_option("--epsilon", cfg.solve.epsilon, "Resolvent regularization E -> E + i epsilon");

  auto* ens = app.add_subcommand("ensemble", "Partition function, complex entropy and generalized force");
  add_shared(ens, cfg.shared, false, &seed_opts["ensemble"]);
  add_ensemble(ens, cfg.ensemble, &mu_opts["ensemble"]);
  ens->add_option("--beta", cfg.ensemble.beta, "Projected inverse temperature");
  ens->add_option("--hamiltonian", cfg.ensemble.hamiltonian, "Hamiltonian JSON (levels from the solved P sector)");
  ens->add_option("--projector", cfg.ensemble.projector, "P-subspace indices for --hamiltonian");

  auto* tree = app.add_subcommand("tree", "Cayley-tree growth simulation");
  add_shared(tree, cfg.shared, false, &seed_opts["tree"]);
  tree->add_option("--m", cfg.tree.m, "Branching number")->check(CLI::Range(2, 1 << 20));
  tree->add_option("--steps", cfg.tree.steps, "Growth steps")->check(CLI::PositiveNumber);
  tree->add_option("--beta", cfg.tree.beta, "Projected inverse temperature");
  tree->add_option("--mode", cfg.tree.mode, "bare or shifted")->check(CLI::IsMember({"bare", "shifted"}));
  tree->add_option("--energy-dist", cfg.tree.energy_dist, "uniform:a,b | gaussian:mu,sigma | constant:c");
  tree->add_option("--shift-dist", cfg.tree.shift_dist, "as --energy-dist, or matrix:lo,hi");
  tree->add_flag("--invert-sign", cfg.tree.invert_sign, "Favour high energies (flip the exponent sign)");
  tree->add_option("--edges", cfg.tree.edges, "Edge-list CSV path");

  auto* and_cmd = app.add_subcommand("anderson", "Anderson impurity mean field, exchange and ensemble");
  add_shared(and_cmd, cfg.shared, false, &seed_opts["anderson"]);
  add_anderson(and_cmd, cfg.anderson, &v_opts["anderson"], &rho_opts["anderson"]);
  and_cmd->add_option("--lambda", cfg.anderson.lambda, "Hybridization in the Fock-space model");
  and_cmd->add_option("--beta", cfg.anderson.beta, "Projected inverse temperature");
  and_cmd->add_option("--bath", cfg.anderson.bath, "Comma-separated bath levels");
  and_cmd->add_option("--bath-size", cfg.anderson.bath_size, "Evenly spaced bath levels over [E_F-1, E_F+1]")
      ->check(CLI::Range(0, 4));
  and_cmd->add_option("--scan", cfg.anderson.scan, "Phase scan, ed=a:b:h or u=a:b:h");

  auto* sweep = app.add_subcommand("sweep", "Parallel one-parameter sweep");
  add_shared(sweep, cfg.shared, true, &seed_opts["sweep"]);
  sweep->add_option("--target", cfg.sweep.target, "anderson or ensemble")
      ->required()
      ->check(CLI::IsMember({"anderson", "ensemble"}));
  sweep->add_option("--range", cfg.sweep.ranges, "name=start:stop:step")->required();
  add_ensemble(sweep, cfg.ensemble, &mu_opts["sweep"]);
  add_anderson(sweep, cfg.anderson, &v_opts["sweep"], &rho_opts["sweep"]);
  sweep->add_option("--beta", cfg.anderson.beta, "Projected inverse temperature");

  for (auto* sub : app.get_subcommands({})) sub->configurable();
  try {
    app.parse(argc, argv);
  } catch (const CLI::FileError& e) {
    throw FileNotFound(e.what());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, out);
      return std::nullopt;
    }
    throw UsageError(e.what());
  }

  const CLI::App* used = app.get_subcommands().front();
  const std::string name = used->get_name();
  if (name == "solve") cfg.command = Command::Solve;
  else if (name == "ensemble") cfg.command = Command::Ensemble;
  else if (name == "tree") cfg.command = Command::Tree;
  else if (name == "anderson") cfg.command = Command::Anderson;
  else cfg.command = Command::Sweep;

  try {
    cfg.shared.seed = optional_value<std::uint64_t>(seed_opts[name]);
    if (mu_opts.count(name)) cfg.ensemble.mu = optional_value<double>(mu_opts[name]);
    if (v_opts.count(name)) cfg.anderson.v = optional_value<double>(v_opts[name]);
    if (rho_opts.count(name)) cfg.anderson.rho0 = optional_value<double>(rho_opts[name]);
  } catch (const CLI::Error& e) {
    throw UsageError(e.what());
  }
  if (cfg.command == Command::Sweep) cfg.ensemble.beta = cfg.anderson.beta;

  switch (cfg.command) {
    case Command::Solve:
      require_file(cfg.solve.hamiltonian, "--hamiltonian");
      break;
    case Command::Ensemble:
      require_file(cfg.ensemble.hamiltonian, "--hamiltonian");
      if (cfg.ensemble.theta.empty() == cfg.ensemble.hamiltonian.empty()) {
        throw UsageError("ensemble: give exactly one of --theta or --hamiltonian");
      }
      if (!cfg.ensemble.hamiltonian.empty() && cfg.ensemble.projector.empty()) {
        throw UsageError("ensemble: --hamiltonian requires --projector");
      }
      break;
    case Command::Sweep:
      if (cfg.sweep.ranges.size() != 1) {
        throw UsageError("--range: sweep takes exactly one ranged parameter, got " +
                         std::to_string(cfg.sweep.ranges.size()));
      }
      if (cfg.sweep.target == "ensemble" && cfg.ensemble.theta.empty()) {
        throw UsageError("sweep --target ensemble requires --theta");
      }
      break;
    default: break;
  }
  if (cfg.tree.m < 2) throw UsageError("--m: branching number must be >= 2");

  // Only the selected subcommand is echoed, as a TOML section that --config
  // accepts unchanged.
  cfg.echo = "[" + name + "]\n" + used->config_to_str(true, false);
  return cfg;
}

}  // namespace subdyn::cli
