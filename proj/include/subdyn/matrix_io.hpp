#pragma once

#include <array>
#include <optional>
#include <string>

#include "json.hpp"
#include "subdyn/types.hpp"

namespace subdyn::io {

using Json = nlohmann::json;

/// Matrix file format: {"dim": n, "entries": [[re, im], ...]} in row-major
/// order with n*n entries. Bipartite densities add "dims": [d_S, d_B].
Json matrix_to_json(const Matrix& m, std::optional<std::array<Index, 2>> dims = std::nullopt);
Matrix matrix_from_json(const Json& j);

Json complex_to_json(Complex z);
Complex complex_from_json(const Json& j);

/// Reads a matrix file and validates Hermiticity. Throws ParseError on
/// malformed input, NotHermitian on asymmetric entries.
HermitianOperator load_hermitian(const std::string& path);
void save_matrix(const std::string& path, const Matrix& m,
                 std::optional<std::array<Index, 2>> dims = std::nullopt);

}  // namespace subdyn::io
