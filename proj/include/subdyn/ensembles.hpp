#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "subdyn/operators.hpp"
#include "subdyn/types.hpp"

namespace subdyn {

// Boltzmann's constant is 1 throughout: beta is an inverse energy and
// entropies are dimensionless.

enum class DensitySource { Exponential, Transformed, Reduced };

std::string_view to_string(DensitySource s);

struct ProjectedDensity {
  Matrix matrix;
  double beta_proj = 0.0;
  DensitySource source = DensitySource::Exponential;

  Index dim() const { return matrix.rows(); }
};

/// Discrete spectrum for partition sums, optionally grand canonical.
struct PartitionSpec {
  std::vector<Complex> theta;
  double beta_proj = 1.0;
  std::optional<double> mu_proj;
  /// Number eigenvalues paired with theta; required when mu_proj is set.
  std::vector<double> numbers;
};

struct ThermoReport {
  double beta = 0.0;
  Complex log_z;
  /// S = ln Z - beta d(ln Z)/d(beta).
  Complex entropy;
  /// Generalized force Y = -(1/beta) d(ln Z)/dy; zero unless computed.
  Complex force;
  std::string parameter;
  Complex dlogz_dbeta;
  Complex dlogz_dbeta_fd;
  /// |analytic - finite difference| / max(1, |analytic|).
  double derivative_discrepancy = 0.0;
  std::string log_branch = "principal";
};

/// exp(-beta H) / Tr exp(-beta H), evaluated spectrally with a shift so no
/// exponent is positive.
ProjectedDensity gibbs_state(const HermitianOperator& h, double beta);

/// exp(-beta Theta) / Tr exp(-beta Theta) for a possibly non-Hermitian Theta.
/// Throws VanishingTrace when the trace cancels.
ProjectedDensity projected_canonical_density(const Matrix& theta, double beta_proj);
ProjectedDensity projected_canonical_density(const CollisionOperator& theta, double beta_proj);

/// Omega^-1 rho Omega.
ProjectedDensity transform_density(const SimilarityTransform& omega, const ProjectedDensity& rho);

/// ln Z on the principal branch, summed with the dominant term factored out.
Complex log_partition_function(const PartitionSpec& spec);
/// Z = sum_k exp(-beta theta_k - mu N_k).
Complex partition_function(const PartitionSpec& spec);
/// Analytic d(ln Z)/d(beta) = -sum_k theta_k e^{-beta theta_k - mu N_k} / Z.
Complex dlogz_dbeta(const PartitionSpec& spec);

/// exp(-beta Theta - mu N) / Tr(...). Requires [Theta, N] = 0.
ProjectedDensity grand_canonical_density(const Matrix& theta, const HermitianOperator& number,
                                         double beta_proj, double mu_proj);
ProjectedDensity grand_canonical_density(const CollisionOperator& theta,
                                         const HermitianOperator& number, double beta_proj,
                                         double mu_proj);

/// Same as grand_canonical_density with N_proj = Omega^-1 N Omega built from a
/// full-space number operator.
ProjectedDensity grand_canonical_density_transformed(const Matrix& theta_full,
                                                     const SimilarityTransform& omega,
                                                     const HermitianOperator& number,
                                                     double beta_proj, double mu_proj);

/// Tr(A rho).
Complex expectation(const Matrix& a, const ProjectedDensity& rho);

/// Entropy from the partition sum, with the analytic beta-derivative
/// cross-checked against a central difference (h = 1e-5 beta).
ThermoReport complex_entropy(const PartitionSpec& spec);

using PartitionFamily = std::function<PartitionSpec(double)>;

/// Y = -(1/beta) d(ln Z)/dy by central difference, h = max(1e-6, 1e-6 |y0|).
Complex generalized_force(const PartitionFamily& spec_of_y, double y0, double beta);

/// Tr_B for a system (x) bath ordered density (system index is the slow one).
Matrix partial_trace_bath(const Matrix& rho, Index d_s, Index d_b);

/// (Tr_B rho) (x) exp(-beta H_B)/Tr exp(-beta H_B).
Matrix reduced_projection(const Matrix& rho, const HermitianOperator& h_bath, double beta,
                          Index d_s, Index d_b);

/// -sum p_k ln p_k.
double shannon_entropy(const std::vector<double>& probabilities);

}  // namespace subdyn
