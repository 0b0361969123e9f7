#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "subdyn/ensembles.hpp"
#include "subdyn/operators.hpp"
#include "subdyn/types.hpp"

namespace subdyn::anderson {

using SparseReal = Eigen::SparseMatrix<double>;

struct AndersonParams {
  std::vector<double> bath_energies;
  double e_d = -5.0;
  double e_f = 0.0;
  double u = 10.0;
  double lambda = 0.0;
  /// Resonance half-width, taken as V^2 rho0(E_F) unless v and rho0 are set.
  double gamma = 0.1;
  std::optional<double> v;
  std::optional<double> rho0;
  /// Multiplies V^2 rho0 when Gamma is derived (pi gives the usual convention).
  double gamma_factor = 1.0;

  double effective_gamma() const;
  void validate() const;
};

/// n energies evenly spaced over [E_F - 1, E_F + 1] (E_F itself when n = 1).
std::vector<double> default_bath(int n, double e_f);

/// Modes ordered (d_up, d_down, k1_up, k1_down, ...); basis states are bit
/// strings with bit i the occupation of mode i. Annihilators carry the
/// Jordan-Wigner string over lower modes; creators are their transposes.
class FockSpace {
 public:
  static constexpr int kMaxBath = 4;

  explicit FockSpace(int n_bath);

  int n_bath() const { return n_bath_; }
  int n_modes() const { return 2 * (n_bath_ + 1); }
  Index dim() const { return Index{1} << n_modes(); }

  static int d_mode(int spin) { return spin; }
  static int k_mode(int k, int spin) { return 2 + 2 * k + spin; }

  const SparseReal& annihilator(int mode) const { return c_[static_cast<std::size_t>(mode)]; }
  SparseReal creator(int mode) const { return annihilator(mode).transpose(); }
  SparseReal number(int mode) const;
  SparseReal total_number() const;
  SparseReal identity() const;

  SparseReal s_z() const;
  SparseReal s_plus() const;
  SparseReal s_minus() const;

  /// max |{c_i, c_j^dag} - delta_ij| and max |{c_i, c_j}| over all pairs.
  double anticommutator_error() const;

 private:
  int n_bath_;
  std::vector<SparseReal> c_;
};

struct OccupationProjectors {
  /// Diagonal projectors for zero, one and two impurity electrons.
  std::array<SparseReal, 3> p;
  /// Fock basis indices of each sector, ascending.
  std::array<std::vector<Index>, 3> indices;

  OrthogonalProjector sector(int n) const;
};

/// Throws TooLarge beyond FockSpace::kMaxBath bath levels.
HermitianOperator build_anderson_hamiltonian(const AndersonParams& params);
HermitianOperator build_anderson_hamiltonian(const AndersonParams& params, const FockSpace& fock);

OccupationProjectors impurity_projectors(const FockSpace& fock);

struct BlockReport {
  /// norms[n][m] = ||P_n H P_m||_F.
  std::array<std::array<double, 3>, 3> norms{};
};

/// Throws BlockStructureViolation unless P0 H P2 and P2 H P0 vanish exactly.
BlockReport verify_block_structure(const HermitianOperator& h, const OccupationProjectors& proj);

/// H11 + H12 (E - H22)^-1 H21 + H10 (E - H00)^-1 H01 on the P1 sector.
CollisionOperator theta1(const HermitianOperator& h, const OccupationProjectors& proj, Complex e,
                         double singular_tol_rel = 1e-10);

/// Self-consistent Theta_1 branches, seeded from H11.
SectorSolution theta1_branches(const HermitianOperator& h, const OccupationProjectors& proj,
                               const SolverConfig& cfg = {});

/// (lambda^2 / 2) {1/(E_k - E_d) - 1/(U + E_d - E_k')}. Throws SingularDenominator.
double exchange_coupling(const AndersonParams& params, int k, int k_prime);
/// Same formula for explicit level energies.
double exchange_coupling(const AndersonParams& params, double e_k, double e_k_prime);
/// lambda^2 {1/(E_k - E_d) + 1/(U + E_d - E_k')}: the coefficient of the
/// spin-flip terms in the second-order operator.
double spin_exchange_coefficient(const AndersonParams& params, double e_k, double e_k_prime);
/// -lambda^2 / |E_d - E_F|.
double kondo_limit_J(const AndersonParams& params);

/// Second-order effective operator on the P1 sector:
///   H11 + sum_kk' J_kk' sum_s c+_ks c_k's
///       + sum_kk' J^ex_kk' {Sz (c+_k^ c_k'^ - c+_kv c_k'v) + S+ c+_kv c_k'^ + S- c+_k^ c_k'v}
///       + sum_k lambda^2/(E_d - E_k) n_d
/// with J from exchange_coupling and J^ex from spin_exchange_coefficient.
Matrix kondo_effective_hamiltonian(const AndersonParams& params, const FockSpace& fock);

enum class MomentBranch { Symmetric, UpMoment, DownMoment };
std::string to_string(MomentBranch b);

struct MeanFieldConfig {
  double tol = 1e-12;
  int max_iter = 1000;
  double damping = 0.5;
  /// Switch from damped iteration to Newton below this residual.
  double newton_threshold = 1e-3;
};

struct MeanFieldResult {
  double n_up = 0.5;
  double n_down = 0.5;
  double residual = 0.0;
  int iterations = 0;
  MomentBranch branch = MomentBranch::Symmetric;
  /// E_d + U <n_other> + i Gamma, indexed by spin (0 = up).
  std::array<Complex, 2> theta{};
};

/// <n_s> = (1/pi) arccot[(E_d - E_F + U <n_-s>)/Gamma] with arccot in (0, pi).
double occupation_map(const AndersonParams& params, double n_other);

MeanFieldResult mean_field_solve(const AndersonParams& params, std::array<double, 2> init,
                                 const MeanFieldConfig& cfg = {});

struct ScanGrid {
  std::vector<double> e_d;
  std::vector<double> u;
  double gamma = 0.1;
  double e_f = 0.0;
  double beta = 1.0;
};

struct PhaseCell {
  double e_d = 0.0;
  double u = 0.0;
  double gamma = 0.0;
  int n_solutions = 0;
  bool converged = true;
  /// Most polarized solution found.
  MeanFieldResult solution;
  double moment = 0.0;
  Complex entropy;
};

/// Each cell is solved from the stencil {(0.5,0.5), (0.99,0.01), (0.01,0.99)};
/// solutions within 1e-6 are merged. Cells run in parallel when threads > 1,
/// with results in grid order (e_d outer, u inner).
std::vector<PhaseCell> local_moment_scan(const ScanGrid& grid, const MeanFieldConfig& cfg = {},
                                         int threads = 1);

std::string phase_csv(const std::vector<PhaseCell>& cells);

struct NetworkEnsemble {
  /// Spin-resolved levels theta_ds in node order (up, down per node).
  std::vector<Complex> theta;
  std::vector<Complex> weights;
  Complex z;
  ThermoReport thermo;
};

/// Z = sum_ds exp(-beta theta_ds) over the given impurity nodes.
NetworkEnsemble network_ensemble(const std::vector<MeanFieldResult>& nodes, double beta_proj);
NetworkEnsemble network_ensemble(const AndersonParams& params, const MeanFieldResult& mf,
                                 double beta_proj);

}  // namespace subdyn::anderson
