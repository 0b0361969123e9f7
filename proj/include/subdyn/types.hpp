#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace subdyn {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Dense Hermitian matrix (H, H0, H_B, H_int, ...). Construction rejects
/// entries whose asymmetry exceeds the tolerance.
class HermitianOperator {
 public:
  static constexpr double kHermiticityTol = 1e-12;

  explicit HermitianOperator(Matrix entries, double tol = kHermiticityTol);

  /// Builds from a matrix and replaces it with (A + A^dagger)/2 without checking.
  static HermitianOperator symmetrized(const Matrix& a);

  Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  double frobenius_norm() const { return m_.norm(); }

  /// Eigenvalues in ascending order. Recomputed on every call.
  RealVector eigenvalues() const;

 private:
  struct Unchecked {};
  HermitianOperator(Matrix entries, Unchecked) : m_(std::move(entries)) {}
  Matrix m_;
};

/// Orthogonal projector P onto span{e_i : i in subspace}; Q = 1 - P.
class OrthogonalProjector {
 public:
  Index dim() const { return dim_; }
  Index rank() const { return static_cast<Index>(p_.size()); }
  Index complement_rank() const { return static_cast<Index>(q_.size()); }

  /// Sorted basis indices spanning P and Q respectively.
  const std::vector<Index>& p_indices() const { return p_; }
  const std::vector<Index>& q_indices() const { return q_; }

  Matrix matrix() const;
  Matrix complement_matrix() const;

  /// Projector with P and Q exchanged.
  OrthogonalProjector mirrored() const;

 private:
  friend OrthogonalProjector make_projector(Index dim, std::vector<Index> subspace);
  OrthogonalProjector(Index dim, std::vector<Index> p, std::vector<Index> q)
      : dim_(dim), p_(std::move(p)), q_(std::move(q)) {}

  Index dim_ = 0;
  std::vector<Index> p_;
  std::vector<Index> q_;
};

/// Validated projector construction. Throws IndexOutOfRange for bad or
/// duplicated indices and EmptyOrFullSubspace when P or Q would vanish.
OrthogonalProjector make_projector(Index dim, std::vector<Index> subspace);

// Compressions between the full space and a coordinate subspace.
Matrix select_block(const Matrix& m, const std::vector<Index>& rows,
                    const std::vector<Index>& cols);
Vector embed(const Vector& v, const std::vector<Index>& idx, Index dim);
Vector restrict_to(const Vector& v, const std::vector<Index>& idx);

}  // namespace subdyn
