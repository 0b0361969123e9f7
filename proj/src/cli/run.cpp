#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "cli/cli.hpp"
#include "subdyn/cayley_tree.hpp"
#include "subdyn/ensembles.hpp"
#include "subdyn/matrix_io.hpp"
#include "subdyn/operators.hpp"
#include "subdyn/spin_network.hpp"

namespace subdyn::cli {

namespace {

using io::Json;

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Json cjson(Complex z) { return io::complex_to_json(z); }

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  return parts;
}

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& item, const std::string& flag) {
  try {
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used == item.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw UsageError(flag + ": bad number '" + item + "'");
}

std::vector<double> parse_real_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  for (const auto& raw : split(text, ',')) out.push_back(parse_real(strip(raw), flag));
  if (out.empty()) throw UsageError(flag + ": empty list");
  return out;
}

// Accepts a, bi, a+bi, a-bi, i and -i.
Complex parse_complex(const std::string& raw, const std::string& flag) {
  const std::string s = strip(raw);
  if (s.empty()) throw UsageError(flag + ": empty value");
  if (s.back() != 'i' && s.back() != 'j') return {parse_real(s, flag), 0.0};
  const std::string body = s.substr(0, s.size() - 1);
  std::size_t split_at = std::string::npos;
  for (std::size_t k = body.size(); k-- > 1;) {
    if ((body[k] == '+' || body[k] == '-') && body[k - 1] != 'e' && body[k - 1] != 'E') {
      split_at = k;
      break;
    }
  }
  auto imag_of = [&](const std::string& t) {
    if (t.empty() || t == "+") return 1.0;
    if (t == "-") return -1.0;
    return parse_real(t, flag);
  };
  if (split_at == std::string::npos) return {0.0, imag_of(body)};
  return {parse_real(body.substr(0, split_at), flag), imag_of(body.substr(split_at))};
}

std::vector<Complex> parse_complex_list(const std::string& text, const std::string& flag) {
  std::vector<Complex> out;
  for (const auto& raw : split(text, ',')) out.push_back(parse_complex(raw, flag));
  if (out.empty()) throw UsageError(flag + ": empty list");
  return out;
}

std::vector<Index> parse_indices(const std::string& text, const std::string& flag) {
  std::vector<Index> out;
  for (const auto& raw : split(text, ',')) {
    const std::string s = strip(raw);
    try {
      std::size_t used = 0;
      const long long v = std::stoll(s, &used);
      if (used == s.size()) {
        out.push_back(static_cast<Index>(v));
        continue;
      }
    } catch (const std::exception&) {
    }
    throw UsageError(flag + ": bad index '" + s + "'");
  }
  if (out.empty()) throw UsageError(flag + ": empty index list");
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::ParseError, "cannot write " + path);
  f << text;
}

SolverConfig solver_config(const RunConfig& cfg) {
  SolverConfig s;
  s.tol = cfg.shared.tol;
  s.max_iter = cfg.shared.max_iter;
  s.damping = cfg.solve.damping;
  s.epsilon = cfg.solve.epsilon;
  return s;
}

anderson::MeanFieldConfig mean_field_config(const RunConfig& cfg) {
  anderson::MeanFieldConfig m;
  m.tol = std::max(cfg.shared.tol, 1e-15);
  m.max_iter = cfg.shared.max_iter;
  return m;
}

Json payload_solve(const RunConfig& cfg) {
  const auto h = io::load_hermitian(cfg.solve.hamiltonian);
  const auto p = make_projector(h.dim(), parse_indices(cfg.solve.projector, "--projector"));
  const auto sol = solve_subdynamics(h, p, solver_config(cfg));
  Json eig = Json::array(), res = Json::array(), iters = Json::array(), conv = Json::array();
  for (const auto& b : sol.branches()) {
    eig.push_back(cjson(b.energy));
    res.push_back(b.residual);
    iters.push_back(b.iterations);
    conv.push_back(b.converged);
  }
  Json collisions = Json::array();
  for (const auto& [a, b] : sol.p_sector.collisions) collisions.push_back({a, b});
  return {{"eigenvalues", eig},
          {"residuals", res},
          {"iterations", iters},
          {"converged", conv},
          {"collisions", collisions},
          {"theta", io::matrix_to_json(sol.theta().matrix)},
          {"omega", io::matrix_to_json(sol.omega.omega)},
          {"omega_condition_number", sol.omega.condition_number},
          {"intertwining_residual", intertwining_residual(h, sol.omega.omega, sol.theta_full())}};
}

PartitionSpec ensemble_spec(const EnsembleOptions& e, std::vector<Complex> theta) {
  PartitionSpec spec;
  spec.theta = std::move(theta);
  spec.beta_proj = e.beta;
  spec.mu_proj = e.mu;
  if (!e.numbers.empty()) spec.numbers = parse_real_list(e.numbers, "--numbers");
  if (e.mu && spec.numbers.size() != spec.theta.size()) {
    throw UsageError("--numbers: --mu needs one number per level");
  }
  return spec;
}

ThermoReport ensemble_thermo(const EnsembleOptions& e, const std::vector<Complex>& theta) {
  const PartitionSpec spec = ensemble_spec(e, theta);
  if (e.force_level >= static_cast<int>(theta.size())) {
    throw UsageError("--force-level: level " + std::to_string(e.force_level) + " does not exist");
  }
  ThermoReport rep = complex_entropy(spec);
  const int level = e.force_level;
  const PartitionFamily family = [spec, level](double y) {
    PartitionSpec s = spec;
    if (level < 0) {
      for (Complex& t : s.theta) t += y;
    } else {
      s.theta[static_cast<std::size_t>(level)] = Complex(y, s.theta[static_cast<std::size_t>(level)].imag());
    }
    return s;
  };
  const double y0 = level < 0 ? 0.0 : theta[static_cast<std::size_t>(level)].real();
  rep.force = generalized_force(family, y0, spec.beta_proj);
  rep.parameter = level < 0 ? "shift" : "level" + std::to_string(level);
  return rep;
}

Json thermo_json(const ThermoReport& r) {
  return {{"beta", r.beta},
          {"logZ", cjson(r.log_z)},
          {"log_branch", r.log_branch},
          {"S", cjson(r.entropy)},
          {"Y", cjson(r.force)},
          {"force_parameter", r.parameter},
          {"dlogZ_dbeta", cjson(r.dlogz_dbeta)},
          {"derivative_discrepancy", r.derivative_discrepancy}};
}

Json payload_ensemble(const RunConfig& cfg) {
  const auto& e = cfg.ensemble;
  if (!e.theta.empty()) {
    const auto theta = parse_complex_list(e.theta, "--theta");
    Json j = thermo_json(ensemble_thermo(e, theta));
    j["theta"] = Json::array();
    for (Complex t : theta) j["theta"].push_back(cjson(t));
    return j;
  }
  const auto h = io::load_hermitian(e.hamiltonian);
  const auto p = make_projector(h.dim(), parse_indices(e.projector, "--projector"));
  const auto sol = solve_subdynamics(h, p, solver_config(cfg));
  std::vector<Complex> theta;
  for (const auto& b : sol.branches()) theta.push_back(b.energy);
  EnsembleOptions opts = e;
  if (opts.mu) throw UsageError("--mu: give --theta with --numbers for grand canonical sums");
  Json j = thermo_json(ensemble_thermo(opts, theta));
  j["theta"] = Json::array();
  for (Complex t : theta) j["theta"].push_back(cjson(t));
  j["density"] = io::matrix_to_json(projected_canonical_density(sol.theta(), e.beta).matrix);
  return j;
}

Json payload_tree(const RunConfig& cfg, std::ostream& out) {
  const auto& t = cfg.tree;
  tree::TreeConfig tc;
  tc.m = t.m;
  tc.steps = t.steps;
  tc.beta_proj = t.beta;
  tc.mode = tree::parse_growth_mode(t.mode);
  tc.energy_dist = tree::Distribution::parse(t.energy_dist);
  tc.shift_dist = tree::Distribution::parse(t.shift_dist);
  if (cfg.shared.seed) tc.seed = *cfg.shared.seed;
  tc.invert_sign = t.invert_sign;
  const auto stats = tree::simulate(tc);
  const std::string csv = tree::steps_csv(stats);
  if (cfg.shared.out.empty()) out << csv;
  else write_text(cfg.shared.out, csv);
  if (!t.edges.empty()) write_text(t.edges, tree::edges_csv(stats));
  return {{"csv", cfg.shared.out.empty() ? "-" : cfg.shared.out},
          {"edges", t.edges.empty() ? Json(nullptr) : Json(t.edges)},
          {"seed", tc.seed},
          {"steps", stats.steps.size()},
          {"nodes", stats.nodes.size()},
          {"final_interface_size", stats.final_interface_size},
          {"depth_profile", stats.depth_profile},
          {"interface_histogram", stats.interface_histogram},
          {"histogram_range", {stats.histogram_lo, stats.histogram_hi}}};
}

anderson::AndersonParams anderson_params(const AndersonOptions& a) {
  anderson::AndersonParams p;
  p.e_d = a.ed;
  p.e_f = a.ef;
  p.u = a.u;
  p.gamma = a.gamma;
  p.lambda = a.lambda;
  p.v = a.v;
  p.rho0 = a.rho0;
  p.gamma_factor = a.gamma_factor;
  if (!a.bath.empty()) p.bath_energies = parse_real_list(a.bath, "--bath");
  else if (a.bath_size > 0) p.bath_energies = anderson::default_bath(a.bath_size, a.ef);
  p.validate();
  return p;
}

std::string strip_header(const std::string& csv) { return csv.substr(csv.find('\n') + 1); }

std::vector<anderson::PhaseCell> anderson_cells(const anderson::AndersonParams& p, double beta,
                                                const anderson::MeanFieldConfig& mf,
                                                const std::vector<double>& e_d,
                                                const std::vector<double>& u) {
  anderson::ScanGrid grid;
  grid.e_d = e_d;
  grid.u = u;
  grid.gamma = p.effective_gamma();
  grid.e_f = p.e_f;
  grid.beta = beta;
  return anderson::local_moment_scan(grid, mf, 1);
}

Json payload_anderson(const RunConfig& cfg, std::ostream& out) {
  const auto& a = cfg.anderson;
  const auto p = anderson_params(a);
  const auto mf = mean_field_config(cfg);
  Json j;
  std::string csv;
  if (!a.scan.empty()) {
    const Range r = parse_range(a.scan);
    std::vector<double> e_d{p.e_d}, u{p.u};
    if (r.name == "ed" || r.name == "e_d") e_d = r.values;
    else if (r.name == "u") u = r.values;
    else throw UsageError("--scan: parameter must be ed or u, got '" + r.name + "'");
    const auto cells = anderson_cells(p, a.beta, mf, e_d, u);
    csv = anderson::phase_csv(cells);
    j["rows"] = cells.size();
    j["scan"] = r.name;
  } else {
    if (!(p.effective_gamma() > 0.0)) throw Error(ErrorKind::BadConfig, "mean field needs Gamma > 0");
    // One row per distinct self-consistent solution.
    std::vector<anderson::PhaseCell> rows;
    for (const auto& init : {std::array<double, 2>{0.5, 0.5}, {0.99, 0.01}, {0.01, 0.99}}) {
      const auto r = anderson::mean_field_solve(p, init, mf);
      const bool dup = std::any_of(rows.begin(), rows.end(), [&](const anderson::PhaseCell& c) {
        return std::abs(c.solution.n_up - r.n_up) <= 1e-6 && std::abs(c.solution.n_down - r.n_down) <= 1e-6;
      });
      if (dup) continue;
      anderson::PhaseCell c;
      c.e_d = p.e_d;
      c.u = p.u;
      c.gamma = p.effective_gamma();
      c.solution = r;
      c.moment = std::abs(r.n_up - r.n_down);
      c.entropy = anderson::network_ensemble(p, r, a.beta).thermo.entropy;
      rows.push_back(c);
    }
    for (auto& c : rows) c.n_solutions = static_cast<int>(rows.size());
    csv = anderson::phase_csv(rows);
    Json sols = Json::array();
    for (const auto& c : rows) {
      sols.push_back({{"n_up", c.solution.n_up},
                      {"n_down", c.solution.n_down},
                      {"residual", c.solution.residual},
                      {"iterations", c.solution.iterations},
                      {"branch", anderson::to_string(c.solution.branch)},
                      {"S", cjson(c.entropy)}});
    }
    j["solutions"] = sols;
    j["rows"] = rows.size();
  }

  if (!p.bath_energies.empty() && p.lambda != 0.0) {
    const anderson::FockSpace fock(static_cast<int>(p.bath_energies.size()));
    const auto h = anderson::build_anderson_hamiltonian(p, fock);
    const auto proj = anderson::impurity_projectors(fock);
    const auto blocks = anderson::verify_block_structure(h, proj);
    const auto sector = anderson::theta1_branches(h, proj, solver_config(cfg));
    Json energies = Json::array();
    for (const auto& b : sector.branches) energies.push_back(cjson(b.energy));
    const auto nb = p.bath_energies.size();
    Json jkk = Json::array();
    for (std::size_t k = 0; k < nb; ++k) {
      Json row = Json::array();
      for (std::size_t q = 0; q < nb; ++q) {
        row.push_back(anderson::exchange_coupling(p, static_cast<int>(k), static_cast<int>(q)));
      }
      jkk.push_back(row);
    }
    j["bath"] = p.bath_energies;
    j["theta1_eigenvalues"] = energies;
    j["exchange_coupling"] = jkk;
    j["block_norms"] = blocks.norms;
  }

  if (cfg.shared.out.empty()) out << csv;
  else write_text(cfg.shared.out, csv);
  j["csv"] = cfg.shared.out.empty() ? "-" : cfg.shared.out;
  return j;
}

// Applies one swept value to a copy of the configuration.
RunConfig with_value(const RunConfig& base, const std::string& name, double v) {
  RunConfig c = base;
  auto& a = c.anderson;
  auto& e = c.ensemble;
  if (name == "beta") {
    a.beta = v;
    e.beta = v;
  } else if (c.sweep.target == "ensemble") {
    if (name == "mu") e.mu = v;
    else throw UsageError("--range: ensemble sweeps accept beta or mu, got '" + name + "'");
  } else if (name == "ed" || name == "e_d") {
    a.ed = v;
  } else if (name == "ef" || name == "e_f") {
    a.ef = v;
  } else if (name == "u") {
    a.u = v;
  } else if (name == "gamma") {
    a.gamma = v;
  } else {
    throw UsageError("--range: anderson sweeps accept ed, ef, u, gamma or beta, got '" + name + "'");
  }
  return c;
}

std::string sweep_row(const RunConfig& c, const std::string& name, double v) {
  if (c.sweep.target == "ensemble") {
    const auto r = ensemble_thermo(c.ensemble, parse_complex_list(c.ensemble.theta, "--theta"));
    return fmt(v) + "," + fmt(r.log_z.real()) + "," + fmt(r.log_z.imag()) + "," + fmt(r.entropy.real()) + "," +
           fmt(r.entropy.imag()) + "," + fmt(r.force.real()) + "," + fmt(r.force.imag()) + "\n";
  }
  (void)name;
  const auto p = anderson_params(c.anderson);
  const auto cells = anderson_cells(p, c.anderson.beta, mean_field_config(c), {p.e_d}, {p.u});
  return fmt(v) + "," + strip_header(anderson::phase_csv(cells));
}

Json payload_sweep(const RunConfig& cfg, std::ostream& out) {
  const Range r = parse_range(cfg.sweep.ranges.front());
  const std::size_t n = r.values.size();
  std::vector<RunConfig> cells;
  cells.reserve(n);
  for (double v : r.values) cells.push_back(with_value(cfg, r.name, v));

  std::vector<std::string> rows(n);
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](std::size_t i) {
    try {
      rows[i] = sweep_row(cells[i], r.name, r.values[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, cfg.shared.threads)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < n; i += workers) work(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::string csv = r.name + ",";
  csv += cfg.sweep.target == "ensemble" ? "logZ_re,logZ_im,S_re,S_im,Y_re,Y_im\n"
                                        : "E_d,U,gamma,n_solutions,n_up,n_down,moment,theta_re,theta_im,S_re,S_im\n";
  for (const auto& row : rows) csv += row;
  if (cfg.shared.out.empty()) out << csv;
  else write_text(cfg.shared.out, csv);
  return {{"csv", cfg.shared.out.empty() ? "-" : cfg.shared.out},
          {"parameter", r.name},
          {"rows", n},
          {"workers", workers}};
}

}  // namespace

int run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  (void)err;
  const auto t0 = std::chrono::steady_clock::now();
  Json payload;
  bool csv_command = false;
  switch (cfg.command) {
    case Command::Solve: payload = payload_solve(cfg); break;
    case Command::Ensemble: payload = payload_ensemble(cfg); break;
    case Command::Tree: payload = payload_tree(cfg, out); csv_command = true; break;
    case Command::Anderson: payload = payload_anderson(cfg, out); csv_command = true; break;
    case Command::Sweep: payload = payload_sweep(cfg, out); csv_command = true; break;
  }
  Json env = {{"tool", "subdyn"},
              {"version", kVersion},
              {"command", to_string(cfg.command)},
              {"config", cfg.echo},
              {"payload", payload}};
  if (cfg.shared.timing) {
    env["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  const std::string text = env.dump(2) + "\n";
  if (!cfg.shared.envelope.empty()) {
    write_text(cfg.shared.envelope, text);
  } else if (!csv_command && !cfg.shared.out.empty()) {
    write_text(cfg.shared.out, text);
  } else if (!csv_command || !cfg.shared.out.empty()) {
    // CSV commands print the envelope only when their table went to a file.
    out << text;
  }
  return kOk;
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    const auto cfg = parse_config(argc, argv, out);
    if (!cfg) return kOk;
    return run(*cfg, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const FileNotFound& e) {
    err << "file not found: " << e.what() << '\n';
    return kFileNotFound;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

}  // namespace subdyn::cli
