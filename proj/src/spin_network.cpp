#include "subdyn/spin_network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <thread>

#include <Eigen/Eigenvalues>

#include "subdyn/errors.hpp"
#include "subdyn/linalg.hpp"

namespace subdyn::anderson {

namespace {

using Triplet = Eigen::Triplet<double>;

SparseReal diagonal_from(Index dim, const std::function<double(Index)>& f) {
  std::vector<Triplet> t;
  for (Index s = 0; s < dim; ++s) {
    const double v = f(s);
    if (v != 0.0) t.emplace_back(s, s, v);
  }
  SparseReal m(dim, dim);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

double max_abs(const SparseReal& m) {
  double best = 0.0;
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseReal::InnerIterator it(m, k); it; ++it) best = std::max(best, std::abs(it.value()));
  return best;
}

int occupancy(Index state, int mode) { return static_cast<int>((state >> mode) & 1); }

void check_denominator(double d, const char* what) {
  if (!std::isfinite(1.0 / d) || std::abs(d) < 1e-14) {
    throw Error(ErrorKind::SingularDenominator, std::string(what) + " vanishes");
  }
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

double AndersonParams::effective_gamma() const {
  if (v && rho0) return gamma_factor * (*v) * (*v) * (*rho0);
  return gamma;
}

void AndersonParams::validate() const {
  for (double x : {e_d, e_f, u, lambda, gamma, gamma_factor})
    if (!std::isfinite(x)) throw Error(ErrorKind::BadConfig, "Anderson parameters must be finite");
  for (double e : bath_energies)
    if (!std::isfinite(e)) throw Error(ErrorKind::BadConfig, "bath energies must be finite");
  if (u < 0.0) throw Error(ErrorKind::BadConfig, "U must be >= 0");
  if (effective_gamma() < 0.0) throw Error(ErrorKind::BadConfig, "Gamma must be >= 0");
}

std::vector<double> default_bath(int n, double e_f) {
  if (n < 0) throw Error(ErrorKind::BadConfig, "bath size must be >= 0");
  if (n == 1) return {e_f};
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(e_f - 1.0 + 2.0 * i / (n - 1));
  return out;
}

FockSpace::FockSpace(int n_bath) : n_bath_(n_bath) {
  if (n_bath < 0) throw Error(ErrorKind::BadConfig, "bath size must be >= 0");
  if (n_bath > kMaxBath) {
    throw Error(ErrorKind::TooLarge, "at most " + std::to_string(kMaxBath) + " bath levels (dim 4^(N_k+1))");
  }
  const Index d = dim();
  for (int mode = 0; mode < n_modes(); ++mode) {
    std::vector<Triplet> t;
    for (Index s = 0; s < d; ++s) {
      if (!occupancy(s, mode)) continue;
      int below = 0;
      for (int j = 0; j < mode; ++j) below += occupancy(s, j);
      t.emplace_back(s & ~(Index{1} << mode), s, (below % 2) ? -1.0 : 1.0);
    }
    SparseReal c(d, d);
    c.setFromTriplets(t.begin(), t.end());
    c_.push_back(std::move(c));
  }
}

SparseReal FockSpace::number(int mode) const {
  return diagonal_from(dim(), [mode](Index s) { return static_cast<double>(occupancy(s, mode)); });
}

SparseReal FockSpace::total_number() const {
  return diagonal_from(dim(), [](Index s) { return static_cast<double>(std::popcount(static_cast<unsigned long long>(s))); });
}

SparseReal FockSpace::identity() const {
  return diagonal_from(dim(), [](Index) { return 1.0; });
}

SparseReal FockSpace::s_z() const { return 0.5 * (number(d_mode(0)) - number(d_mode(1))); }

SparseReal FockSpace::s_plus() const { return SparseReal(creator(d_mode(0)) * annihilator(d_mode(1))); }

SparseReal FockSpace::s_minus() const { return SparseReal(creator(d_mode(1)) * annihilator(d_mode(0))); }

double FockSpace::anticommutator_error() const {
  const SparseReal id = identity();
  double err = 0.0;
  for (int i = 0; i < n_modes(); ++i) {
    for (int j = 0; j < n_modes(); ++j) {
      const SparseReal ci = annihilator(i), cj = annihilator(j);
      const SparseReal cjd = creator(j);
      SparseReal mixed = ci * cjd + cjd * ci;
      if (i == j) mixed -= id;
      const SparseReal same = ci * cj + cj * ci;
      err = std::max({err, max_abs(mixed), max_abs(same)});
    }
  }
  return err;
}

OrthogonalProjector OccupationProjectors::sector(int n) const {
  if (n < 0 || n > 2) throw Error(ErrorKind::IndexOutOfRange, "sector must be 0, 1 or 2");
  return make_projector(p[0].rows(), indices[static_cast<std::size_t>(n)]);
}

HermitianOperator build_anderson_hamiltonian(const AndersonParams& params) {
  params.validate();
  const int n = static_cast<int>(params.bath_energies.size());
  if (n > FockSpace::kMaxBath) {
    throw Error(ErrorKind::TooLarge, "at most " + std::to_string(FockSpace::kMaxBath) + " bath levels (dim 4^(N_k+1))");
  }
  return build_anderson_hamiltonian(params, FockSpace(n));
}

HermitianOperator build_anderson_hamiltonian(const AndersonParams& params, const FockSpace& fock) {
  params.validate();
  if (static_cast<int>(params.bath_energies.size()) != fock.n_bath()) {
    throw Error(ErrorKind::DimensionMismatch, "bath energies do not match the Fock space");
  }
  SparseReal h(fock.dim(), fock.dim());
  for (int s = 0; s < 2; ++s) {
    h += params.e_d * fock.number(FockSpace::d_mode(s));
    for (int k = 0; k < fock.n_bath(); ++k) {
      h += params.bath_energies[static_cast<std::size_t>(k)] * fock.number(FockSpace::k_mode(k, s));
      const SparseReal hop = fock.creator(FockSpace::k_mode(k, s)) * fock.annihilator(FockSpace::d_mode(s));
      h += params.lambda * SparseReal(hop + SparseReal(hop.transpose()));
    }
  }
  h += params.u * SparseReal(fock.number(FockSpace::d_mode(0)) * fock.number(FockSpace::d_mode(1)));
  return HermitianOperator(Matrix(RealMatrix(h).cast<Complex>()));
}

OccupationProjectors impurity_projectors(const FockSpace& fock) {
  OccupationProjectors out;
  for (int n = 0; n < 3; ++n) {
    out.p[static_cast<std::size_t>(n)] = diagonal_from(fock.dim(), [n](Index s) {
      return occupancy(s, 0) + occupancy(s, 1) == n ? 1.0 : 0.0;
    });
  }
  for (Index s = 0; s < fock.dim(); ++s) {
    out.indices[static_cast<std::size_t>(occupancy(s, 0) + occupancy(s, 1))].push_back(s);
  }
  return out;
}

BlockReport verify_block_structure(const HermitianOperator& h, const OccupationProjectors& proj) {
  if (h.dim() != proj.p[0].rows()) throw Error(ErrorKind::DimensionMismatch, "H and projectors differ in dim");
  BlockReport r;
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      r.norms[a][b] = select_block(h.matrix(), proj.indices[a], proj.indices[b]).norm();
  if (r.norms[0][2] != 0.0 || r.norms[2][0] != 0.0) {
    throw Error(ErrorKind::BlockStructureViolation,
                "||P0 H P2|| = " + std::to_string(r.norms[0][2]) + ", expected exactly 0");
  }
  return r;
}

CollisionOperator theta1(const HermitianOperator& h, const OccupationProjectors& proj, Complex e,
                         double singular_tol_rel) {
  if (h.dim() != proj.p[0].rows()) throw Error(ErrorKind::DimensionMismatch, "H and projectors differ in dim");
  const auto& i0 = proj.indices[0];
  const auto& i1 = proj.indices[1];
  const auto& i2 = proj.indices[2];
  const Matrix& m = h.matrix();
  const double tol = singular_tol_rel * std::max(1.0, spectral_norm_hermitian(m));

  Matrix out = select_block(m, i1, i1);
  for (const auto* outer : {&i0, &i2}) {
    const Matrix hnn = select_block(m, *outer, *outer);
    Eigen::SelfAdjointEigenSolver<Matrix> es(hnn);
    for (Index k = 0; k < es.eigenvalues().size(); ++k) {
      if (std::abs(e - es.eigenvalues()(k)) < tol) {
        throw Error(ErrorKind::NearSingularResolvent, "E lies on the spectrum of an outer sector");
      }
    }
    // (E - Hnn)^-1 in the eigenbasis of Hnn.
    const Vector inv = (e - es.eigenvalues().cast<Complex>().array()).inverse();
    const Matrix v = es.eigenvectors();
    const Matrix to = select_block(m, i1, *outer) * v;
    const Matrix from = v.adjoint() * select_block(m, *outer, i1);
    out += to * inv.asDiagonal() * from;
  }
  return {out, CollisionConstruction::SelfConsistent};
}

SectorSolution theta1_branches(const HermitianOperator& h, const OccupationProjectors& proj,
                               const SolverConfig& cfg) {
  // Q = P0 + P2 and H02 = 0, so the core resolvent splits into the two
  // outer sectors exactly as in theta1.
  return solve_branches(h, proj.sector(1), cfg);
}

double exchange_coupling(const AndersonParams& params, double e_k, double e_k_prime) {
  const double d1 = e_k - params.e_d;
  const double d2 = params.u + params.e_d - e_k_prime;
  check_denominator(d1, "E_k - E_d");
  check_denominator(d2, "U + E_d - E_k'");
  return 0.5 * params.lambda * params.lambda * (1.0 / d1 - 1.0 / d2);
}

double exchange_coupling(const AndersonParams& params, int k, int k_prime) {
  const auto n = static_cast<int>(params.bath_energies.size());
  if (k < 0 || k >= n || k_prime < 0 || k_prime >= n) {
    throw Error(ErrorKind::IndexOutOfRange, "bath level index out of range");
  }
  return exchange_coupling(params, params.bath_energies[static_cast<std::size_t>(k)],
                           params.bath_energies[static_cast<std::size_t>(k_prime)]);
}

double spin_exchange_coefficient(const AndersonParams& params, double e_k, double e_k_prime) {
  const double d1 = e_k - params.e_d;
  const double d2 = params.u + params.e_d - e_k_prime;
  check_denominator(d1, "E_k - E_d");
  check_denominator(d2, "U + E_d - E_k'");
  return params.lambda * params.lambda * (1.0 / d1 + 1.0 / d2);
}

double kondo_limit_J(const AndersonParams& params) {
  const double d = params.e_d - params.e_f;
  check_denominator(d, "E_d - E_F");
  return -params.lambda * params.lambda / std::abs(d);
}

Matrix kondo_effective_hamiltonian(const AndersonParams& params, const FockSpace& fock) {
  const HermitianOperator h = build_anderson_hamiltonian(params, fock);
  const auto proj = impurity_projectors(fock);
  const auto& i1 = proj.indices[1];
  Matrix out = select_block(h.matrix(), i1, i1);
  if (params.lambda == 0.0) return out;

  const SparseReal sz = fock.s_z(), sp = fock.s_plus(), sm = fock.s_minus();
  SparseReal k(fock.dim(), fock.dim());
  const int n = fock.n_bath();
  double shift = 0.0;
  for (int a = 0; a < n; ++a) {
    const double ea = params.bath_energies[static_cast<std::size_t>(a)];
    check_denominator(params.e_d - ea, "E_d - E_k");
    shift += params.lambda * params.lambda / (params.e_d - ea);
    for (int b = 0; b < n; ++b) {
      const double eb = params.bath_energies[static_cast<std::size_t>(b)];
      const double j = exchange_coupling(params, ea, eb);
      const double jex = spin_exchange_coefficient(params, ea, eb);
      auto hop = [&](int sa, int sb) {
        return SparseReal(fock.creator(FockSpace::k_mode(a, sa)) * fock.annihilator(FockSpace::k_mode(b, sb)));
      };
      const SparseReal uu = hop(0, 0), dd = hop(1, 1), du = hop(1, 0), ud = hop(0, 1);
      k += j * SparseReal(uu + dd);
      k += jex * SparseReal(SparseReal(sz * SparseReal(uu - dd)) + SparseReal(sp * du) + SparseReal(sm * ud));
    }
  }
  const SparseReal nd = fock.number(FockSpace::d_mode(0)) + fock.number(FockSpace::d_mode(1));
  k += shift * nd;
  const RealMatrix dense(k);
  out += select_block(Matrix(dense.cast<Complex>()), i1, i1);
  return out;
}

std::string to_string(MomentBranch b) {
  switch (b) {
    case MomentBranch::Symmetric: return "symmetric";
    case MomentBranch::UpMoment: return "up-moment";
    case MomentBranch::DownMoment: return "down-moment";
  }
  return "unknown";
}

double occupation_map(const AndersonParams& params, double n_other) {
  const double g = params.effective_gamma();
  // arccot(y)/pi with arccot in (0, pi) is 1/2 - atan(y)/pi.
  return 0.5 - std::atan((params.e_d - params.e_f + params.u * n_other) / g) / std::numbers::pi;
}

MeanFieldResult mean_field_solve(const AndersonParams& params, std::array<double, 2> init,
                                 const MeanFieldConfig& cfg) {
  params.validate();
  const double g = params.effective_gamma();
  if (!(g > 0.0)) throw Error(ErrorKind::BadConfig, "mean field needs Gamma > 0");
  if (!(cfg.damping > 0.0 && cfg.damping <= 1.0)) throw Error(ErrorKind::BadConfig, "damping must lie in (0, 1]");
  if (cfg.max_iter < 1 || !(cfg.tol > 0.0)) throw Error(ErrorKind::BadConfig, "tol and max_iter must be positive");

  const auto f = [&](double x) { return occupation_map(params, x); };
  const auto df = [&](double x) {
    const double y = (params.e_d - params.e_f + params.u * x) / g;
    return -(params.u / g) / (std::numbers::pi * (1.0 + y * y));
  };
  const auto residual = [&](double up, double dn) {
    return std::max(std::abs(up - f(dn)), std::abs(dn - f(up)));
  };

  double up = init[0], dn = init[1];
  double r = residual(up, dn);
  int it = 0;
  // Damped iteration cannot settle on repelling fixed points, so after a
  // stall Newton with backtracking takes over regardless of the threshold.
  constexpr int kStall = 200;
  while (r > cfg.tol && it < cfg.max_iter) {
    ++it;
    if (r < cfg.newton_threshold || it > kStall) {
      const double f1 = up - f(dn), f2 = dn - f(up);
      const double a = -df(dn), b = -df(up);  // J = [[1, a], [b, 1]]
      const double det = 1.0 - a * b;
      if (det != 0.0 && std::isfinite(det)) {
        const double s1 = (f1 - a * f2) / det;
        const double s2 = (f2 - b * f1) / det;
        double t = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
          const double nu = std::clamp(up - t * s1, 0.0, 1.0);
          const double nd = std::clamp(dn - t * s2, 0.0, 1.0);
          const double nr = residual(nu, nd);
          if (nr < r) {
            up = nu;
            dn = nd;
            r = nr;
            accepted = true;
            break;
          }
        }
        if (accepted) continue;
      }
    }
    const double nu = (1.0 - cfg.damping) * up + cfg.damping * f(dn);
    const double nd = (1.0 - cfg.damping) * dn + cfg.damping * f(up);
    up = nu;
    dn = nd;
    r = residual(up, dn);
  }
  if (r > cfg.tol) {
    throw Error(ErrorKind::NoConvergence, "mean field residual " + std::to_string(r) + " after " +
                                              std::to_string(it) + " iterations");
  }
  MeanFieldResult out;
  out.n_up = up;
  out.n_down = dn;
  out.residual = r;
  out.iterations = it;
  const double moment = up - dn;
  out.branch = std::abs(moment) <= 1e-6 ? MomentBranch::Symmetric
               : moment > 0.0           ? MomentBranch::UpMoment
                                        : MomentBranch::DownMoment;
  out.theta[0] = Complex(params.e_d + params.u * dn, g);
  out.theta[1] = Complex(params.e_d + params.u * up, g);
  return out;
}

NetworkEnsemble network_ensemble(const std::vector<MeanFieldResult>& nodes, double beta_proj) {
  if (nodes.empty()) throw Error(ErrorKind::BadConfig, "network has no nodes");
  NetworkEnsemble out;
  for (const auto& n : nodes) {
    out.theta.push_back(n.theta[0]);
    out.theta.push_back(n.theta[1]);
  }
  PartitionSpec spec;
  spec.theta = out.theta;
  spec.beta_proj = beta_proj;
  out.thermo = complex_entropy(spec);
  out.z = std::exp(out.thermo.log_z);
  // Weights relative to the dominant level so they stay finite even when Z does not.
  std::size_t ref = 0;
  for (std::size_t k = 0; k < out.theta.size(); ++k)
    if ((-beta_proj * out.theta[k]).real() > (-beta_proj * out.theta[ref]).real()) ref = k;
  Complex sum = 0.0;
  for (const Complex& t : out.theta) {
    out.weights.push_back(std::exp(-beta_proj * (t - out.theta[ref])));
    sum += out.weights.back();
  }
  for (Complex& w : out.weights) w /= sum;
  return out;
}

NetworkEnsemble network_ensemble(const AndersonParams& params, const MeanFieldResult& mf,
                                 double beta_proj) {
  MeanFieldResult node = mf;
  const double g = params.effective_gamma();
  node.theta[0] = Complex(params.e_d + params.u * mf.n_down, g);
  node.theta[1] = Complex(params.e_d + params.u * mf.n_up, g);
  return network_ensemble(std::vector<MeanFieldResult>{node}, beta_proj);
}

std::vector<PhaseCell> local_moment_scan(const ScanGrid& grid, const MeanFieldConfig& cfg, int threads) {
  if (!(grid.gamma > 0.0)) throw Error(ErrorKind::BadConfig, "scan needs Gamma > 0");
  std::vector<PhaseCell> cells;
  for (double ed : grid.e_d)
    for (double u : grid.u) {
      PhaseCell c;
      c.e_d = ed;
      c.u = u;
      c.gamma = grid.gamma;
      cells.push_back(c);
    }

  auto solve_cell = [&](PhaseCell& c) {
    AndersonParams p;
    p.e_d = c.e_d;
    p.e_f = grid.e_f;
    p.u = c.u;
    p.gamma = grid.gamma;
    std::vector<MeanFieldResult> found;
    for (const auto& init : {std::array<double, 2>{0.5, 0.5}, {0.99, 0.01}, {0.01, 0.99}}) {
      try {
        const auto r = mean_field_solve(p, init, cfg);
        const bool dup = std::any_of(found.begin(), found.end(), [&](const MeanFieldResult& s) {
          return std::abs(s.n_up - r.n_up) <= 1e-6 && std::abs(s.n_down - r.n_down) <= 1e-6;
        });
        if (!dup) found.push_back(r);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NoConvergence) throw;
        c.converged = false;
      }
    }
    c.n_solutions = static_cast<int>(found.size());
    if (found.empty()) return;
    const auto best = std::max_element(found.begin(), found.end(), [](const auto& a, const auto& b) {
      return std::abs(a.n_up - a.n_down) < std::abs(b.n_up - b.n_down);
    });
    c.solution = *best;
    c.moment = std::abs(best->n_up - best->n_down);
    try {
      c.entropy = network_ensemble(p, *best, grid.beta).thermo.entropy;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::VanishingTrace) throw;
      c.entropy = Complex(std::nan(""), std::nan(""));
    }
  };

  const int nt = std::max(1, std::min<int>(threads, static_cast<int>(cells.size())));
  if (nt == 1) {
    for (auto& c : cells) solve_cell(c);
    return cells;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nt));
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = static_cast<std::size_t>(t); i < cells.size(); i += static_cast<std::size_t>(nt))
          solve_cell(cells[i]);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return cells;
}

std::string phase_csv(const std::vector<PhaseCell>& cells) {
  std::string out = "E_d,U,gamma,n_solutions,n_up,n_down,moment,theta_re,theta_im,S_re,S_im\n";
  for (const auto& c : cells) {
    out += fmt(c.e_d) + "," + fmt(c.u) + "," + fmt(c.gamma) + "," + std::to_string(c.n_solutions) + "," +
           fmt(c.solution.n_up) + "," + fmt(c.solution.n_down) + "," + fmt(c.moment) + "," +
           fmt(c.solution.theta[0].real()) + "," + fmt(c.solution.theta[0].imag()) + "," +
           fmt(c.entropy.real()) + "," + fmt(c.entropy.imag()) + "\n";
  }
  return out;
}

}  // namespace subdyn::anderson
