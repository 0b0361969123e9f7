#include "subdyn/ensembles.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>

#include "subdyn/errors.hpp"
#include "subdyn/linalg.hpp"

namespace subdyn {

namespace {

constexpr double kVanishingRel = 1e-12;

Complex principal(Complex z) {
  double im = std::remainder(z.imag(), 2.0 * std::numbers::pi);
  if (im <= -std::numbers::pi) im += 2.0 * std::numbers::pi;
  return {z.real(), im};
}

// Imaginary part of a log difference folded into (-pi, pi].
Complex unwrap_difference(Complex d) { return principal(d); }

struct Exponents {
  std::vector<Complex> x;  // -beta theta_k - mu N_k
  std::size_t ref = 0;     // index with the largest real part
};

Exponents exponents(const PartitionSpec& spec) {
  if (spec.theta.empty()) throw Error(ErrorKind::BadConfig, "partition spectrum is empty");
  if (spec.mu_proj && spec.numbers.size() != spec.theta.size()) {
    throw Error(ErrorKind::DimensionMismatch, "number eigenvalues must pair with theta");
  }
  Exponents e;
  e.x.reserve(spec.theta.size());
  for (std::size_t k = 0; k < spec.theta.size(); ++k) {
    Complex xk = -spec.beta_proj * spec.theta[k];
    if (spec.mu_proj) xk -= *spec.mu_proj * spec.numbers[k];
    e.x.push_back(xk);
    if (xk.real() > e.x[e.ref].real()) e.ref = k;
  }
  return e;
}

// Returns (sum_k w_k, sum_k |w_k|) with w_k = exp(x_k - x_ref).
std::pair<Complex, double> shifted_sum(const Exponents& e) {
  Complex sum = 0.0;
  double mag = 0.0;
  for (const Complex& xk : e.x) {
    const Complex w = std::exp(xk - e.x[e.ref]);
    sum += w;
    mag += std::abs(w);
  }
  if (std::abs(sum) < kVanishingRel * mag) {
    throw Error(ErrorKind::VanishingTrace, "partition sum cancels");
  }
  return {sum, mag};
}

ProjectedDensity normalized_exponential(const Matrix& generator, double beta) {
  // exp(-G) / Tr exp(-G), shifted by the eigenvalue of G with smallest real part.
  const Index n = generator.rows();
  Eigen::ComplexEigenSolver<Matrix> es(generator, false);
  Complex shift = es.eigenvalues()(0);
  double mag = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (es.eigenvalues()(i).real() < shift.real()) shift = es.eigenvalues()(i);
  }
  Complex trace_est = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Complex w = std::exp(-(es.eigenvalues()(i) - shift));
    trace_est += w;
    mag += std::abs(w);
  }
  if (std::abs(trace_est) < kVanishingRel * mag) {
    throw Error(ErrorKind::VanishingTrace, "Tr exp(-beta Theta) cancels");
  }
  Matrix shifted = generator;
  shifted.diagonal().array() -= shift;
  Matrix w = expm(shifted, -1.0).value;
  const Complex tr = w.trace();
  if (std::abs(tr) < kVanishingRel * mag) {
    throw Error(ErrorKind::VanishingTrace, "Tr exp(-beta Theta) cancels");
  }
  return {w / tr, beta, DensitySource::Exponential};
}

}  // namespace

std::string_view to_string(DensitySource s) {
  switch (s) {
    case DensitySource::Exponential: return "exponential";
    case DensitySource::Transformed: return "transformed";
    case DensitySource::Reduced: return "reduced";
  }
  return "unknown";
}

ProjectedDensity gibbs_state(const HermitianOperator& h, double beta) {
  if (!std::isfinite(beta)) throw Error(ErrorKind::BadConfig, "beta must be finite");
  const Index n = h.dim();
  if (beta == 0.0) return {Matrix::Identity(n, n) / static_cast<double>(n), beta, DensitySource::Exponential};
  Eigen::SelfAdjointEigenSolver<Matrix> es(h.matrix());
  const RealVector& e = es.eigenvalues();
  const double ref = beta > 0.0 ? e.minCoeff() : e.maxCoeff();
  RealVector w = (-beta * (e.array() - ref)).exp();
  w /= w.sum();
  Matrix rho = es.eigenvectors() * w.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
  return {std::move(rho), beta, DensitySource::Exponential};
}

ProjectedDensity projected_canonical_density(const Matrix& theta, double beta_proj) {
  if (theta.rows() != theta.cols() || theta.rows() == 0) {
    throw Error(ErrorKind::DimensionMismatch, "Theta must be square");
  }
  if (!std::isfinite(beta_proj)) throw Error(ErrorKind::BadConfig, "beta_proj must be finite");
  const Index n = theta.rows();
  if (beta_proj == 0.0) {
    return {Matrix::Identity(n, n) / static_cast<double>(n), beta_proj, DensitySource::Exponential};
  }
  return normalized_exponential(beta_proj * theta, beta_proj);
}

ProjectedDensity projected_canonical_density(const CollisionOperator& theta, double beta_proj) {
  return projected_canonical_density(theta.matrix, beta_proj);
}

ProjectedDensity transform_density(const SimilarityTransform& omega, const ProjectedDensity& rho) {
  if (omega.omega.rows() != rho.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "Omega and rho differ in dim");
  }
  if (!(omega.condition_number < 1e14) || omega.omega_inv.size() == 0) {
    throw Error(ErrorKind::SingularOmega, "Omega is not invertible");
  }
  return {omega.omega_inv * rho.matrix * omega.omega, rho.beta_proj, DensitySource::Transformed};
}

Complex log_partition_function(const PartitionSpec& spec) {
  const Exponents e = exponents(spec);
  const auto [sum, mag] = shifted_sum(e);
  (void)mag;
  return principal(e.x[e.ref] + std::log(sum));
}

Complex partition_function(const PartitionSpec& spec) { return std::exp(log_partition_function(spec)); }

Complex dlogz_dbeta(const PartitionSpec& spec) {
  const Exponents e = exponents(spec);
  const auto [sum, mag] = shifted_sum(e);
  (void)mag;
  Complex num = 0.0;
  for (std::size_t k = 0; k < e.x.size(); ++k) num += spec.theta[k] * std::exp(e.x[k] - e.x[e.ref]);
  return -num / sum;
}

ProjectedDensity grand_canonical_density(const Matrix& theta, const HermitianOperator& number,
                                         double beta_proj, double mu_proj) {
  if (theta.rows() != number.dim() || theta.cols() != number.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "Theta and N differ in dim");
  }
  const double scale = std::max(1.0, theta.norm() * number.frobenius_norm());
  const double comm = commutator(theta, number.matrix()).norm();
  if (comm > 1e-10 * scale) {
    throw Error(ErrorKind::NonCommutingNumber, "||[Theta, N]|| = " + std::to_string(comm));
  }
  if (mu_proj == 0.0) return projected_canonical_density(theta, beta_proj);
  const Index n = theta.rows();
  if (beta_proj == 0.0 && mu_proj == 0.0) {
    return {Matrix::Identity(n, n) / static_cast<double>(n), beta_proj, DensitySource::Exponential};
  }
  return normalized_exponential(beta_proj * theta + mu_proj * number.matrix(), beta_proj);
}

ProjectedDensity grand_canonical_density(const CollisionOperator& theta,
                                         const HermitianOperator& number, double beta_proj,
                                         double mu_proj) {
  return grand_canonical_density(theta.matrix, number, beta_proj, mu_proj);
}

ProjectedDensity grand_canonical_density_transformed(const Matrix& theta_full,
                                                     const SimilarityTransform& omega,
                                                     const HermitianOperator& number,
                                                     double beta_proj, double mu_proj) {
  if (omega.omega.rows() != number.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "Omega and N differ in dim");
  }
  const Matrix n_proj = omega.omega_inv * number.matrix() * omega.omega;
  if (theta_full.rows() != n_proj.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "Theta and N differ in dim");
  }
  const double scale = std::max(1.0, theta_full.norm() * n_proj.norm());
  const double comm = commutator(theta_full, n_proj).norm();
  if (comm > 1e-10 * scale) {
    throw Error(ErrorKind::NonCommutingNumber, "||[Theta, N_proj]|| = " + std::to_string(comm));
  }
  return normalized_exponential(beta_proj * theta_full + mu_proj * n_proj, beta_proj);
}

Complex expectation(const Matrix& a, const ProjectedDensity& rho) {
  if (a.rows() != rho.dim() || a.cols() != rho.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "observable and rho differ in dim");
  }
  return (a * rho.matrix).trace();
}

ThermoReport complex_entropy(const PartitionSpec& spec) {
  ThermoReport r;
  r.beta = spec.beta_proj;
  r.log_z = log_partition_function(spec);
  r.dlogz_dbeta = dlogz_dbeta(spec);
  r.entropy = r.log_z - spec.beta_proj * r.dlogz_dbeta;

  const double h = spec.beta_proj != 0.0 ? 1e-5 * std::abs(spec.beta_proj) : 1e-5;
  PartitionSpec up = spec, down = spec;
  up.beta_proj += h;
  down.beta_proj -= h;
  r.dlogz_dbeta_fd =
      unwrap_difference(log_partition_function(up) - log_partition_function(down)) / (2.0 * h);
  r.derivative_discrepancy =
      std::abs(r.dlogz_dbeta_fd - r.dlogz_dbeta) / std::max(1.0, std::abs(r.dlogz_dbeta));
  return r;
}

Complex generalized_force(const PartitionFamily& spec_of_y, double y0, double beta) {
  if (beta == 0.0) throw Error(ErrorKind::BadConfig, "generalized force needs beta != 0");
  const double h = std::max(1e-6, 1e-6 * std::abs(y0));
  const Complex up = log_partition_function(spec_of_y(y0 + h));
  const Complex down = log_partition_function(spec_of_y(y0 - h));
  return -unwrap_difference(up - down) / (2.0 * h) / beta;
}

Matrix partial_trace_bath(const Matrix& rho, Index d_s, Index d_b) {
  if (d_s < 1 || d_b < 1 || rho.rows() != d_s * d_b || rho.cols() != d_s * d_b) {
    throw Error(ErrorKind::DimensionMismatch, "rho must be (d_S d_B) x (d_S d_B)");
  }
  Matrix out = Matrix::Zero(d_s, d_s);
  for (Index i = 0; i < d_s; ++i)
    for (Index j = 0; j < d_s; ++j)
      for (Index b = 0; b < d_b; ++b) out(i, j) += rho(i * d_b + b, j * d_b + b);
  return out;
}

Matrix reduced_projection(const Matrix& rho, const HermitianOperator& h_bath, double beta,
                          Index d_s, Index d_b) {
  if (h_bath.dim() != d_b) throw Error(ErrorKind::DimensionMismatch, "H_B must have dim d_B");
  const Matrix rs = partial_trace_bath(rho, d_s, d_b);
  const Matrix rb = gibbs_state(h_bath, beta).matrix;
  Matrix out(d_s * d_b, d_s * d_b);
  for (Index i = 0; i < d_s; ++i)
    for (Index j = 0; j < d_s; ++j) out.block(i * d_b, j * d_b, d_b, d_b) = rs(i, j) * rb;
  return out;
}

double shannon_entropy(const std::vector<double>& probabilities) {
  double s = 0.0;
  for (double p : probabilities)
    if (p > 0.0) s -= p * std::log(p);
  return s;
}

}  // namespace subdyn
