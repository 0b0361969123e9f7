#include "subdyn/types.hpp"

#include <algorithm>
#include <string>

#include <Eigen/Eigenvalues>

#include "subdyn/errors.hpp"

namespace subdyn {

HermitianOperator::HermitianOperator(Matrix entries, double tol) : m_(std::move(entries)) {
  if (m_.rows() < 1 || m_.rows() != m_.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "Hermitian operator must be square with dim >= 1");
  }
  const double asym = (m_ - m_.adjoint()).cwiseAbs().maxCoeff();
  if (asym > tol) {
    throw Error(ErrorKind::NotHermitian,
                "max |H_ij - conj(H_ji)| = " + std::to_string(asym));
  }
}

HermitianOperator HermitianOperator::symmetrized(const Matrix& a) {
  if (a.rows() < 1 || a.rows() != a.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "Hermitian operator must be square with dim >= 1");
  }
  return HermitianOperator(Matrix(0.5 * (a + a.adjoint())), Unchecked{});
}

RealVector HermitianOperator::eigenvalues() const {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m_, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

OrthogonalProjector make_projector(Index dim, std::vector<Index> subspace) {
  if (dim < 1) throw Error(ErrorKind::DimensionMismatch, "projector dim must be positive");
  std::sort(subspace.begin(), subspace.end());
  for (std::size_t i = 0; i < subspace.size(); ++i) {
    if (subspace[i] < 0 || subspace[i] >= dim) {
      throw Error(ErrorKind::IndexOutOfRange,
                  "index " + std::to_string(subspace[i]) + " outside [0, " + std::to_string(dim) + ")");
    }
    if (i > 0 && subspace[i] == subspace[i - 1]) {
      throw Error(ErrorKind::IndexOutOfRange, "duplicate index " + std::to_string(subspace[i]));
    }
  }
  if (subspace.empty() || static_cast<Index>(subspace.size()) == dim) {
    throw Error(ErrorKind::EmptyOrFullSubspace, "P and Q must both be nonzero");
  }
  std::vector<Index> q;
  q.reserve(static_cast<std::size_t>(dim) - subspace.size());
  for (Index i = 0, j = 0; i < dim; ++i) {
    if (j < static_cast<Index>(subspace.size()) && subspace[j] == i) {
      ++j;
    } else {
      q.push_back(i);
    }
  }
  return OrthogonalProjector(dim, std::move(subspace), std::move(q));
}

Matrix OrthogonalProjector::matrix() const {
  Matrix p = Matrix::Zero(dim_, dim_);
  for (Index i : p_) p(i, i) = 1.0;
  return p;
}

Matrix OrthogonalProjector::complement_matrix() const {
  Matrix q = Matrix::Zero(dim_, dim_);
  for (Index i : q_) q(i, i) = 1.0;
  return q;
}

OrthogonalProjector OrthogonalProjector::mirrored() const {
  return OrthogonalProjector(dim_, q_, p_);
}

Matrix select_block(const Matrix& m, const std::vector<Index>& rows,
                    const std::vector<Index>& cols) {
  return m(rows, cols);
}

Vector embed(const Vector& v, const std::vector<Index>& idx, Index dim) {
  Vector out = Vector::Zero(dim);
  for (std::size_t i = 0; i < idx.size(); ++i) out(idx[i]) = v(static_cast<Index>(i));
  return out;
}

Vector restrict_to(const Vector& v, const std::vector<Index>& idx) {
  return v(idx);
}

}  // namespace subdyn
