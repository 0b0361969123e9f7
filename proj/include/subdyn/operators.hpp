#pragma once

#include <string_view>
#include <utility>
#include <vector>

#include "subdyn/types.hpp"

namespace subdyn {

/// The four blocks of H in a P/Q split, in compressed coordinates
/// (php is rank(P) x rank(P), phq is rank(P) x rank(Q), ...).
struct BlockDecomposition {
  Matrix php;
  Matrix phq;
  Matrix qhp;
  Matrix qhq;

  /// Embeds the blocks back into the full space and sums them.
  Matrix reassemble(const OrthogonalProjector& p) const;
};

BlockDecomposition block_decompose(const HermitianOperator& h, const OrthogonalProjector& p);

enum class CorrelationKind { Creation, Destruction };

/// Resolvent correlation operator. A creation operator C = (E - QHQ)^-1 QHP
/// maps P to Q (rank(Q) x rank(P)); a destruction operator
/// D = (E - PHP)^-1 PHQ maps Q to P (rank(P) x rank(Q)).
struct CorrelationOperator {
  CorrelationKind kind = CorrelationKind::Creation;
  Matrix matrix;
  Complex branch_energy;

  /// Full-space matrix supported on the Q<-P (creation) or P<-Q block.
  Matrix embedded(const OrthogonalProjector& p) const;
};

struct ResolventOptions {
  /// E is replaced by E + i*epsilon. With epsilon > 0 the singularity check is skipped.
  double epsilon = 0.0;
  /// Resolvent is rejected when dist(E, spectrum) < singular_tol_rel * ||H||_2.
  double singular_tol_rel = 1e-10;
};

CorrelationOperator creation_operator(const HermitianOperator& h, const OrthogonalProjector& p,
                                      Complex e, const ResolventOptions& opts = {});

CorrelationOperator destruction_operator(const HermitianOperator& h, const OrthogonalProjector& p,
                                         Complex e, const ResolventOptions& opts = {});

enum class CollisionConstruction { SelfConsistent, BornSecondOrder, StrongCoupling };

std::string_view to_string(CollisionConstruction c);

/// Collision operator acting on the P subspace (rank(P) x rank(P)).
struct CollisionOperator {
  Matrix matrix;
  CollisionConstruction construction = CollisionConstruction::SelfConsistent;

  Index dim() const { return matrix.rows(); }
};

/// Theta = PHP + PHQ * C for a single creation operator.
CollisionOperator collision_operator(const HermitianOperator& h, const OrthogonalProjector& p,
                                     const CorrelationOperator& c);

struct SolverConfig {
  double tol = 1e-12;
  int max_iter = 1000;
  /// Step weight alpha in E <- (1 - alpha) E + alpha * eig(Theta(E)).
  double damping = 0.5;
  double epsilon = 0.0;
  double singular_tol_rel = 1e-10;
  /// SingularOmega is raised above this 2-norm condition number.
  double omega_cond_limit = 1e10;
  /// When false, branches that hit max_iter are kept (flagged unconverged)
  /// instead of raising NoConvergence. Used for iteration traces.
  bool require_convergence = true;
};

/// One self-consistent branch E_kj of the nonlinear eigenproblem
/// Theta(E) phi = E phi.
struct Branch {
  Complex energy;
  /// Eigenvalue of Theta(energy) tracked by this branch; equals energy at
  /// the fixed point.
  Complex theta_eigenvalue;
  Vector p_eigenvector;     ///< phi_kj in compressed P coordinates, unit norm
  Vector full_eigenvector;  ///< f_kj = (P + C(E_kj)) phi_kj in the full space
  CorrelationOperator correlation;
  int iterations = 0;
  bool converged = false;
  /// ||H f - E f|| / ||f||.
  double residual = 0.0;
  /// Energy iterates E_0, E_1, ..., starting from the seed.
  std::vector<Complex> trace;
};

/// Branches of one sector with their assembled collision operator.
struct SectorSolution {
  std::vector<Branch> branches;
  CollisionOperator theta;
  /// Pairs of branch indices that converged to the same energy within tol.
  std::vector<std::pair<int, int>> collisions;
};

/// Solves every branch of the P sector, seeded from the eigenpairs of PHP.
/// Throws NoConvergence (unless disabled) or NearSingularResolvent.
SectorSolution solve_branches(const HermitianOperator& h, const OrthogonalProjector& p,
                              const SolverConfig& cfg = {});

/// Omega = sum_kj (P_kj + C_kj), with its inverse.
struct SimilarityTransform {
  Matrix omega;
  Matrix omega_inv;
  double condition_number = 1.0;
};

/// Builds Omega from converged P- and Q-sector branches. The Q sector is the
/// mirrored problem, so its branches carry destruction-side correlations.
SimilarityTransform similarity_transform(const OrthogonalProjector& p,
                                         const std::vector<Branch>& p_branches,
                                         const std::vector<Branch>& q_branches,
                                         double cond_limit = 1e10);

struct SubdynamicsSolution {
  OrthogonalProjector projector;
  SectorSolution p_sector;
  SectorSolution q_sector;
  SimilarityTransform omega;

  const std::vector<Branch>& branches() const { return p_sector.branches; }
  const CollisionOperator& theta() const { return p_sector.theta; }

  /// Theta_P (+) Theta_Q embedded in the full space.
  Matrix theta_full() const;

  /// Pi_k = |f_k><f~_k| with the dual normalized so <f~_k|f_k> = 1.
  /// k runs over P-sector branches first, then Q-sector branches.
  Matrix spectral_projector(Index k) const;
};

SubdynamicsSolution solve_subdynamics(const HermitianOperator& h, const OrthogonalProjector& p,
                                      const SolverConfig& cfg = {});

/// ||H Omega - Omega Theta_full||_F / ||H||_F.
double intertwining_residual(const HermitianOperator& h, const Matrix& omega,
                             const Matrix& theta_full);

/// Markovian collision operator with the resolvent frozen at an unperturbed
/// energy z0: PHP + PHQ (z0 - QH0Q)^-1 QHP, H = H0 + lambda H1.
CollisionOperator born_theta(const HermitianOperator& h0, const HermitianOperator& h1,
                             double lambda, const OrthogonalProjector& p, double z0,
                             double singular_tol_rel = 1e-10);

struct StrongCouplingLevel {
  Index n;
  double z0;      ///< n-th eigenvalue of PH0P
  Complex theta;  ///< (z0 + <phi_n|H1 Q H0 Q H1^-1|phi_n>) / 2
};

/// Large-coupling effective energies, one per eigenvector of PH0P.
/// Throws SingularH1 when cond(H1) exceeds h1_cond_limit.
std::vector<StrongCouplingLevel> theta_strong_coupling(const HermitianOperator& h0,
                                                       const HermitianOperator& h1,
                                                       const OrthogonalProjector& p,
                                                       double h1_cond_limit = 1e12);

/// exp(-i Theta t) psi0.
Vector evolve_projected_state(const CollisionOperator& theta, const Vector& psi0, double t);

/// exp(-i Theta t) rho0 exp(+i Theta t). This is the literal commutator
/// evolution i d(rho)/dt = [Theta, rho], not the adjoint form; for
/// non-Hermitian Theta the decay shows up in the state norm only.
Matrix evolve_projected_density(const CollisionOperator& theta, const Matrix& rho0, double t);

}  // namespace subdyn
