#include "subdyn/operators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "subdyn/errors.hpp"
#include "subdyn/linalg.hpp"

namespace subdyn {

namespace {

void require_same_dim(const HermitianOperator& h, const OrthogonalProjector& p) {
  if (h.dim() != p.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "H has dim " + std::to_string(h.dim()) +
                                                  ", projector has dim " + std::to_string(p.dim()));
  }
}

double singular_tolerance(const Matrix& h, double rel) {
  const double norm = spectral_norm_hermitian(h);
  return norm > 0.0 ? rel * norm : rel;
}

// (E - A)^-1 B for Hermitian A, after checking the distance to spectrum(A).
Matrix resolvent_apply(const Matrix& a, const Matrix& b, Complex e, const ResolventOptions& opts,
                       double tol_abs) {
  const Complex shifted = e + Complex(0.0, opts.epsilon);
  if (opts.epsilon <= 0.0) {
    const double dist = distance_to_spectrum(a, shifted);
    if (dist < tol_abs) {
      throw Error(ErrorKind::NearSingularResolvent,
                  "E is " + std::to_string(dist) + " from the resolvent spectrum");
    }
  }
  Matrix shifted_a = -a;
  shifted_a.diagonal().array() += shifted;
  return shifted_a.partialPivLu().solve(b);
}

// Per-sector data for the branch iteration: QHQ is diagonalized once so every
// C(E) costs two matrix products.
class SectorProblem {
 public:
  SectorProblem(const HermitianOperator& h, const OrthogonalProjector& p, const SolverConfig& cfg)
      : eps_(cfg.epsilon) {
    const auto& m = h.matrix();
    php_ = select_block(m, p.p_indices(), p.p_indices());
    const Matrix phq = select_block(m, p.p_indices(), p.q_indices());
    const Matrix qhp = select_block(m, p.q_indices(), p.p_indices());
    const Matrix qhq = select_block(m, p.q_indices(), p.q_indices());
    Eigen::SelfAdjointEigenSolver<Matrix> es(qhq);
    q_spectrum_ = es.eigenvalues();
    q_vectors_ = es.eigenvectors();
    qhp_rot_ = q_vectors_.adjoint() * qhp;
    phq_rot_ = phq * q_vectors_;
    decoupled_ = qhp.isZero(0.0);
    sing_tol_ = singular_tolerance(m, cfg.singular_tol_rel);
  }

  const Matrix& php() const { return php_; }
  bool decoupled() const { return decoupled_; }

  Vector inverse_denominators(Complex e) const {
    const Complex shifted = e + Complex(0.0, eps_);
    if (eps_ <= 0.0) {
      const double dist = distance_to_spectrum(q_spectrum_, shifted);
      if (dist < sing_tol_) {
        throw Error(ErrorKind::NearSingularResolvent,
                    "branch energy " + std::to_string(e.real()) + " is " + std::to_string(dist) +
                        " from spectrum(QHQ)");
      }
    }
    Vector inv(q_spectrum_.size());
    for (Index i = 0; i < inv.size(); ++i) inv(i) = 1.0 / (shifted - q_spectrum_(i));
    return inv;
  }

  Matrix creation(Complex e) const {
    return q_vectors_ * (inverse_denominators(e).asDiagonal() * qhp_rot_);
  }

  Matrix theta(Complex e) const {
    return php_ + phq_rot_ * (inverse_denominators(e).asDiagonal() * qhp_rot_);
  }

  bool theta_hermitian(Complex e) const { return eps_ <= 0.0 && e.imag() == 0.0; }

 private:
  double eps_;
  Matrix php_;
  Matrix qhp_rot_;
  Matrix phq_rot_;
  RealVector q_spectrum_;
  Matrix q_vectors_;
  double sing_tol_ = 0.0;
  bool decoupled_ = false;
};

struct EigenPairs {
  Vector values;
  Matrix vectors;  // unit-norm columns
};

EigenPairs eigen_pairs(const Matrix& theta, bool hermitian) {
  if (hermitian) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(0.5 * (theta + theta.adjoint())));
    return {es.eigenvalues().cast<Complex>(), es.eigenvectors()};
  }
  Eigen::ComplexEigenSolver<Matrix> es(theta);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorKind::NoConvergence, "eigensolver failed on Theta(E)");
  }
  Matrix vecs = es.eigenvectors();
  vecs.colwise().normalize();
  return {es.eigenvalues(), vecs};
}

// Overlap tracking: the eigenvector closest to phi_old wins; near-ties go to
// the eigenvalue closest to the current energy.
Index track(const EigenPairs& ep, const Vector& phi_old, Complex e) {
  constexpr double kTie = 1e-9;
  Index best = 0;
  double best_overlap = -1.0;
  for (Index i = 0; i < ep.values.size(); ++i) {
    const double ov = std::abs(phi_old.dot(ep.vectors.col(i)));
    if (ov > best_overlap + kTie) {
      best = i;
      best_overlap = ov;
    } else if (ov > best_overlap - kTie &&
               std::abs(ep.values(i) - e) < std::abs(ep.values(best) - e)) {
      best = i;
      best_overlap = std::max(ov, best_overlap);
    }
  }
  return best;
}

// Degenerate eigenspaces of Theta(E) come back in an arbitrary basis, so two
// branches seeded in one can land on the same vector. Vectors already owned
// by converged branches are projected out of each degenerate cluster, and
// clusters they fill completely are skipped, before tracking.
EigenPairs deflate_claimed(const EigenPairs& ep, const std::vector<Vector>& claimed) {
  if (claimed.empty()) return ep;
  constexpr double kDegenerate = 1e-8;
  constexpr double kInSpan = 1e-8;
  const Index n = ep.values.size();
  std::vector<char> used(static_cast<std::size_t>(n), 0);
  std::vector<Complex> values;
  std::vector<Vector> vectors;
  for (Index i = 0; i < n; ++i) {
    if (used[static_cast<std::size_t>(i)]) continue;
    std::vector<Index> cluster;
    for (Index k = i; k < n; ++k) {
      if (!used[static_cast<std::size_t>(k)] &&
          std::abs(ep.values(k) - ep.values(i)) <= kDegenerate * std::max(1.0, std::abs(ep.values(i)))) {
        cluster.push_back(k);
        used[static_cast<std::size_t>(k)] = 1;
      }
    }
    const Index g = static_cast<Index>(cluster.size());
    Matrix v(ep.vectors.rows(), g);
    for (Index c = 0; c < g; ++c) v.col(c) = ep.vectors.col(cluster[static_cast<std::size_t>(c)]);
    const Matrix basis = Eigen::HouseholderQR<Matrix>(v).householderQ() * Matrix::Identity(v.rows(), g);

    Matrix owned(v.rows(), 0);
    for (const Vector& phi : claimed) {
      const Vector unit = phi.normalized();
      if ((basis * (basis.adjoint() * unit)).norm() < 1.0 - kInSpan) continue;
      Vector r = unit - owned * (owned.adjoint() * unit);
      if (r.norm() < 1e-6) continue;
      owned.conservativeResize(Eigen::NoChange, owned.cols() + 1);
      owned.col(owned.cols() - 1) = r.normalized();
    }
    const Index c = owned.cols();
    if (c == 0) {
      for (Index k : cluster) {
        values.push_back(ep.values(k));
        vectors.push_back(ep.vectors.col(k));
      }
      continue;
    }
    if (c >= g) continue;
    const Matrix rest = basis - owned * (owned.adjoint() * basis);
    Eigen::JacobiSVD<Matrix> svd(rest, Eigen::ComputeThinU);
    for (Index k = 0; k < g - c; ++k) {
      values.push_back(ep.values(cluster[static_cast<std::size_t>(k)]));
      vectors.push_back(svd.matrixU().col(k));
    }
  }
  if (values.empty()) return ep;
  EigenPairs out{Vector(static_cast<Index>(values.size())), Matrix(ep.vectors.rows(), static_cast<Index>(values.size()))};
  for (std::size_t k = 0; k < values.size(); ++k) {
    out.values(static_cast<Index>(k)) = values[k];
    out.vectors.col(static_cast<Index>(k)) = vectors[k];
  }
  return out;
}

Vector phase_aligned(const Vector& v, const Vector& ref) {
  const Complex ov = ref.dot(v);
  if (std::abs(ov) == 0.0) return v;
  return v * (std::conj(ov) / std::abs(ov));
}

Branch solve_one_branch(const HermitianOperator& h, const OrthogonalProjector& p,
                        const SectorProblem& prob, Complex seed, const Vector& seed_vec,
                        const std::vector<Vector>& claimed, const SolverConfig& cfg) {
  Branch b;
  Complex e = seed;
  Vector phi = seed_vec;
  b.trace.push_back(e);

  Complex mu = e;
  for (int it = 0;; ++it) {
    const Matrix theta = prob.theta(e);
    const EigenPairs ep = deflate_claimed(eigen_pairs(theta, prob.theta_hermitian(e)), claimed);
    const Index k = track(ep, phi, e);
    mu = ep.values(k);
    phi = phase_aligned(ep.vectors.col(k), phi);
    b.iterations = it;
    if (std::abs(mu - e) <= cfg.tol) {
      b.converged = true;
      break;
    }
    if (it >= cfg.max_iter) break;
    e = (1.0 - cfg.damping) * e + cfg.damping * mu;
    b.trace.push_back(e);
  }

  if (!b.converged && cfg.require_convergence) {
    throw Error(ErrorKind::NoConvergence,
                "branch seeded at " + std::to_string(seed.real()) + " did not converge in " +
                    std::to_string(cfg.max_iter) + " iterations");
  }

  b.energy = e;
  b.theta_eigenvalue = mu;
  b.p_eigenvector = phi;
  b.correlation = CorrelationOperator{CorrelationKind::Creation, prob.creation(e), e};
  const Vector q_part = b.correlation.matrix * phi;
  b.full_eigenvector = embed(phi, p.p_indices(), p.dim()) + embed(q_part, p.q_indices(), p.dim());
  const Vector r = h.matrix() * b.full_eigenvector - e * b.full_eigenvector;
  b.residual = r.norm() / b.full_eigenvector.norm();
  return b;
}

}  // namespace

Matrix BlockDecomposition::reassemble(const OrthogonalProjector& p) const {
  Matrix m = Matrix::Zero(p.dim(), p.dim());
  m(p.p_indices(), p.p_indices()) = php;
  m(p.p_indices(), p.q_indices()) = phq;
  m(p.q_indices(), p.p_indices()) = qhp;
  m(p.q_indices(), p.q_indices()) = qhq;
  return m;
}

BlockDecomposition block_decompose(const HermitianOperator& h, const OrthogonalProjector& p) {
  require_same_dim(h, p);
  const auto& m = h.matrix();
  return {select_block(m, p.p_indices(), p.p_indices()), select_block(m, p.p_indices(), p.q_indices()),
          select_block(m, p.q_indices(), p.p_indices()), select_block(m, p.q_indices(), p.q_indices())};
}

Matrix CorrelationOperator::embedded(const OrthogonalProjector& p) const {
  Matrix m = Matrix::Zero(p.dim(), p.dim());
  if (kind == CorrelationKind::Creation) {
    m(p.q_indices(), p.p_indices()) = matrix;
  } else {
    m(p.p_indices(), p.q_indices()) = matrix;
  }
  return m;
}

CorrelationOperator creation_operator(const HermitianOperator& h, const OrthogonalProjector& p,
                                      Complex e, const ResolventOptions& opts) {
  const BlockDecomposition b = block_decompose(h, p);
  const double tol = singular_tolerance(h.matrix(), opts.singular_tol_rel);
  return {CorrelationKind::Creation, resolvent_apply(b.qhq, b.qhp, e, opts, tol), e};
}

CorrelationOperator destruction_operator(const HermitianOperator& h, const OrthogonalProjector& p,
                                         Complex e, const ResolventOptions& opts) {
  const BlockDecomposition b = block_decompose(h, p);
  const double tol = singular_tolerance(h.matrix(), opts.singular_tol_rel);
  return {CorrelationKind::Destruction, resolvent_apply(b.php, b.phq, e, opts, tol), e};
}

std::string_view to_string(CollisionConstruction c) {
  switch (c) {
    case CollisionConstruction::SelfConsistent: return "self-consistent";
    case CollisionConstruction::BornSecondOrder: return "born-second-order";
    case CollisionConstruction::StrongCoupling: return "strong-coupling";
  }
  return "unknown";
}

CollisionOperator collision_operator(const HermitianOperator& h, const OrthogonalProjector& p,
                                     const CorrelationOperator& c) {
  const BlockDecomposition b = block_decompose(h, p);
  if (c.kind != CorrelationKind::Creation || c.matrix.rows() != p.complement_rank() ||
      c.matrix.cols() != p.rank()) {
    throw Error(ErrorKind::DimensionMismatch, "collision operator needs a Q<-P creation operator");
  }
  return {b.php + b.phq * c.matrix, CollisionConstruction::SelfConsistent};
}

SectorSolution solve_branches(const HermitianOperator& h, const OrthogonalProjector& p,
                              const SolverConfig& cfg) {
  require_same_dim(h, p);
  if (!(cfg.tol > 0.0)) throw Error(ErrorKind::BadConfig, "solver tol must be positive");
  if (!(cfg.damping > 0.0 && cfg.damping <= 1.0)) {
    throw Error(ErrorKind::BadConfig, "damping must lie in (0, 1]");
  }

  const SectorProblem prob(h, p, cfg);
  Eigen::SelfAdjointEigenSolver<Matrix> seeds(prob.php());

  SectorSolution out;
  const Index rank = p.rank();
  out.branches.reserve(static_cast<std::size_t>(rank));
  std::vector<Vector> claimed;
  for (Index j = 0; j < rank; ++j) {
    out.branches.push_back(solve_one_branch(h, p, prob, seeds.eigenvalues()(j),
                                            seeds.eigenvectors().col(j), claimed, cfg));
    if (out.branches.back().converged) claimed.push_back(out.branches.back().p_eigenvector);
  }

  for (Index i = 0; i < rank; ++i) {
    for (Index j = i + 1; j < rank; ++j) {
      if (std::abs(out.branches[i].energy - out.branches[j].energy) <= 2.0 * cfg.tol) {
        out.collisions.emplace_back(static_cast<int>(i), static_cast<int>(j));
      }
    }
  }

  if (prob.decoupled()) {
    out.theta = {prob.php(), CollisionConstruction::SelfConsistent};
    return out;
  }

  // Theta = sum_kj Theta(E_kj) |phi_kj><phi~_kj| = [Theta(E_k) phi_k] Phi^-1.
  Matrix phi(rank, rank);
  Matrix theta_phi(rank, rank);
  for (Index k = 0; k < rank; ++k) {
    const Branch& b = out.branches[static_cast<std::size_t>(k)];
    phi.col(k) = b.p_eigenvector;
    theta_phi.col(k) = prob.theta(b.energy) * b.p_eigenvector;
  }
  if (condition_number(phi) > cfg.omega_cond_limit) {
    throw Error(ErrorKind::SingularOmega, "branch eigenvectors are linearly dependent");
  }
  out.theta = {phi.transpose().partialPivLu().solve(theta_phi.transpose()).transpose(),
               CollisionConstruction::SelfConsistent};
  return out;
}

SimilarityTransform similarity_transform(const OrthogonalProjector& p,
                                         const std::vector<Branch>& p_branches,
                                         const std::vector<Branch>& q_branches,
                                         double cond_limit) {
  const Index rp = p.rank();
  const Index rq = p.complement_rank();
  if (static_cast<Index>(p_branches.size()) != rp || static_cast<Index>(q_branches.size()) != rq) {
    throw Error(ErrorKind::DimensionMismatch, "need one branch per basis vector of each sector");
  }

  // Effective off-diagonal blocks: columns C_k phi_k mapped back through Phi^-1.
  auto effective_block = [cond_limit](const std::vector<Branch>& branches,
                                      const std::vector<Index>& own,
                                      const std::vector<Index>& other) {
    const Index r = static_cast<Index>(own.size());
    Matrix phi(r, r);
    Matrix cross(static_cast<Index>(other.size()), r);
    bool all_zero = true;
    for (Index k = 0; k < r; ++k) {
      const Vector& f = branches[static_cast<std::size_t>(k)].full_eigenvector;
      phi.col(k) = restrict_to(f, own);
      cross.col(k) = restrict_to(f, other);
      all_zero = all_zero && branches[static_cast<std::size_t>(k)].correlation.matrix.isZero(0.0);
    }
    if (all_zero) return Matrix(Matrix::Zero(cross.rows(), r));
    if (condition_number(phi) > cond_limit) {
      throw Error(ErrorKind::SingularOmega, "branch eigenvectors are linearly dependent");
    }
    return Matrix(phi.transpose().partialPivLu().solve(cross.transpose()).transpose());
  };

  const Matrix c_eff = effective_block(p_branches, p.p_indices(), p.q_indices());
  const Matrix d_eff = effective_block(q_branches, p.q_indices(), p.p_indices());

  SimilarityTransform st;
  st.omega = Matrix::Identity(p.dim(), p.dim());
  st.omega(p.q_indices(), p.p_indices()) = c_eff;
  st.omega(p.p_indices(), p.q_indices()) = d_eff;
  st.condition_number = condition_number(st.omega);
  if (!(st.condition_number <= cond_limit)) {
    throw Error(ErrorKind::SingularOmega,
                "cond(Omega) = " + std::to_string(st.condition_number) + " exceeds limit");
  }
  if (c_eff.isZero(0.0) && d_eff.isZero(0.0)) {
    st.omega_inv = st.omega;
  } else {
    st.omega_inv = st.omega.fullPivLu().inverse();
  }
  return st;
}

Matrix SubdynamicsSolution::theta_full() const {
  const Index n = projector.dim();
  Matrix t = Matrix::Zero(n, n);
  t(projector.p_indices(), projector.p_indices()) = p_sector.theta.matrix;
  t(projector.q_indices(), projector.q_indices()) = q_sector.theta.matrix;
  return t;
}

Matrix SubdynamicsSolution::spectral_projector(Index k) const {
  const Index n = projector.dim();
  if (k < 0 || k >= n) throw Error(ErrorKind::IndexOutOfRange, "no branch " + std::to_string(k));
  Matrix f(n, n);
  Index col = 0;
  for (const Branch& b : p_sector.branches) f.col(col++) = b.full_eigenvector;
  for (const Branch& b : q_sector.branches) f.col(col++) = b.full_eigenvector;
  const Matrix f_inv = f.fullPivLu().inverse();
  return f.col(k) * f_inv.row(k);
}

SubdynamicsSolution solve_subdynamics(const HermitianOperator& h, const OrthogonalProjector& p,
                                      const SolverConfig& cfg) {
  SectorSolution ps = solve_branches(h, p, cfg);
  SectorSolution qs = solve_branches(h, p.mirrored(), cfg);
  SimilarityTransform om = similarity_transform(p, ps.branches, qs.branches, cfg.omega_cond_limit);
  return {p, std::move(ps), std::move(qs), std::move(om)};
}

double intertwining_residual(const HermitianOperator& h, const Matrix& omega,
                             const Matrix& theta_full) {
  const Index n = h.dim();
  if (omega.rows() != n || omega.cols() != n || theta_full.rows() != n || theta_full.cols() != n) {
    throw Error(ErrorKind::DimensionMismatch, "Omega and Theta must match H");
  }
  const double num = (h.matrix() * omega - omega * theta_full).norm();
  const double den = h.frobenius_norm();
  return den > 0.0 ? num / den : num;
}

CollisionOperator born_theta(const HermitianOperator& h0, const HermitianOperator& h1,
                             double lambda, const OrthogonalProjector& p, double z0,
                             double singular_tol_rel) {
  if (h0.dim() != h1.dim()) throw Error(ErrorKind::DimensionMismatch, "H0 and H1 differ in dim");
  const auto h = HermitianOperator::symmetrized(h0.matrix() + lambda * h1.matrix());
  const BlockDecomposition b = block_decompose(h, p);
  const Matrix qh0q = select_block(h0.matrix(), p.q_indices(), p.q_indices());
  const double tol = singular_tolerance(h.matrix(), singular_tol_rel);
  const Matrix g = resolvent_apply(qh0q, b.qhp, z0, ResolventOptions{0.0, singular_tol_rel}, tol);
  return {b.php + b.phq * g, CollisionConstruction::BornSecondOrder};
}

std::vector<StrongCouplingLevel> theta_strong_coupling(const HermitianOperator& h0,
                                                       const HermitianOperator& h1,
                                                       const OrthogonalProjector& p,
                                                       double h1_cond_limit) {
  if (h0.dim() != h1.dim()) throw Error(ErrorKind::DimensionMismatch, "H0 and H1 differ in dim");
  require_same_dim(h0, p);
  if (!(condition_number(h1.matrix()) <= h1_cond_limit)) {
    throw Error(ErrorKind::SingularH1, "H1 is not invertible");
  }
  const Matrix q = p.complement_matrix();
  // M = H1 Q H0 Q H1^-1; right division done as a transposed solve.
  const Matrix left = h1.matrix() * q * h0.matrix() * q;
  const Matrix m = h1.matrix().transpose().partialPivLu().solve(left.transpose()).transpose();

  const Matrix ph0p = select_block(h0.matrix(), p.p_indices(), p.p_indices());
  Eigen::SelfAdjointEigenSolver<Matrix> es(ph0p);
  std::vector<StrongCouplingLevel> out;
  for (Index n = 0; n < p.rank(); ++n) {
    const Vector phi = embed(es.eigenvectors().col(n), p.p_indices(), p.dim());
    const Complex shift = phi.dot(m * phi);
    const double z = es.eigenvalues()(n);
    out.push_back({n, z, 0.5 * (z + shift)});
  }
  return out;
}

Vector evolve_projected_state(const CollisionOperator& theta, const Vector& psi0, double t) {
  if (psi0.size() != theta.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "state and Theta differ in dim");
  }
  if (t == 0.0) return psi0;
  return expm(theta.matrix, Complex(0.0, -t)).value * psi0;
}

Matrix evolve_projected_density(const CollisionOperator& theta, const Matrix& rho0, double t) {
  if (rho0.rows() != theta.dim() || rho0.cols() != theta.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "density and Theta differ in dim");
  }
  if (t == 0.0) return rho0;
  const Matrix fwd = expm(theta.matrix, Complex(0.0, -t)).value;
  const Matrix bwd = expm(theta.matrix, Complex(0.0, t)).value;
  return fwd * rho0 * bwd;
}

}  // namespace subdyn
