#pragma once

#include <string_view>

#include "subdyn/types.hpp"

namespace subdyn {

/// How a matrix exponential was evaluated.
enum class ExpmPath { Eigendecomposition, PadeScalingSquaring };

std::string_view to_string(ExpmPath path);

struct ExpmResult {
  Matrix value;
  ExpmPath path;
};

/// Eigenvector condition number threshold above which expm falls back to
/// scaling-and-squaring.
inline constexpr double kExpmEigenCondLimit = 1e8;

/// exp(scale * A) for a general complex square matrix. Uses the
/// eigendecomposition when the eigenvector matrix is well conditioned and
/// Pade scaling-and-squaring otherwise.
ExpmResult expm(const Matrix& a, Complex scale = 1.0);

/// 2-norm condition number from the singular values. Returns +inf for a
/// numerically singular matrix.
double condition_number(const Matrix& m);

/// Largest |lambda| of a Hermitian matrix (its spectral norm).
double spectral_norm_hermitian(const Matrix& h);

/// Distance from a complex point to the spectrum of a Hermitian matrix.
double distance_to_spectrum(const Matrix& hermitian, Complex e);

/// Distance from a complex point to a precomputed real spectrum.
double distance_to_spectrum(const RealVector& spectrum, Complex e);

Matrix commutator(const Matrix& a, const Matrix& b);

/// Least-squares slope of log(err) against log(lambda).
double fitted_order(const std::vector<double>& lambdas, const std::vector<double>& errors);

}  // namespace subdyn
