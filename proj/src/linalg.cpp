#include "subdyn/linalg.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <unsupported/Eigen/MatrixFunctions>

#include "subdyn/errors.hpp"

namespace subdyn {

std::string_view to_string(ExpmPath path) {
  return path == ExpmPath::Eigendecomposition ? "eigendecomposition" : "pade-scaling-squaring";
}

ExpmResult expm(const Matrix& a, Complex scale) {
  if (a.rows() != a.cols()) throw Error(ErrorKind::DimensionMismatch, "expm needs a square matrix");
  if (a.rows() == 0) return {Matrix(0, 0), ExpmPath::Eigendecomposition};

  Eigen::ComplexEigenSolver<Matrix> es(a);
  if (es.info() == Eigen::Success) {
    const Matrix& v = es.eigenvectors();
    if (condition_number(v) < kExpmEigenCondLimit) {
      Vector d = (scale * es.eigenvalues()).array().exp();
      Matrix vd = v * d.asDiagonal();
      // exp(sA) = V diag(e^{s lambda}) V^{-1}; solve instead of forming V^{-1}.
      Matrix out = v.transpose().partialPivLu().solve(vd.transpose()).transpose();
      return {std::move(out), ExpmPath::Eigendecomposition};
    }
  }
  Matrix scaled = scale * a;
  return {scaled.exp(), ExpmPath::PadeScalingSquaring};
}

double condition_number(const Matrix& m) {
  if (m.size() == 0) return 1.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  if (!(smin > 0.0)) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

double spectral_norm_hermitian(const Matrix& h) {
  if (h.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double distance_to_spectrum(const Matrix& hermitian, Complex e) {
  if (hermitian.size() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian, Eigen::EigenvaluesOnly);
  return distance_to_spectrum(es.eigenvalues(), e);
}

double distance_to_spectrum(const RealVector& spectrum, Complex e) {
  double best = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < spectrum.size(); ++i) best = std::min(best, std::abs(e - spectrum(i)));
  return best;
}

Matrix commutator(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "commutator operands differ in shape");
  }
  return a * b - b * a;
}

double fitted_order(const std::vector<double>& lambdas, const std::vector<double>& errors) {
  if (lambdas.size() != errors.size() || lambdas.size() < 2) {
    throw Error(ErrorKind::DimensionMismatch, "order fit needs >= 2 paired samples");
  }
  const double n = static_cast<double>(lambdas.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const double x = std::log(lambdas[i]);
    const double y = std::log(errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace subdyn
