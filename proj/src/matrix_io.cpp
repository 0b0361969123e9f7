#include "subdyn/matrix_io.hpp"

#include <fstream>

#include "subdyn/errors.hpp"

namespace subdyn::io {

Json complex_to_json(Complex z) { return Json::array({z.real(), z.imag()}); }

Complex complex_from_json(const Json& j) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw Error(ErrorKind::ParseError, "complex entry must be [re, im]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

Json matrix_to_json(const Matrix& m, std::optional<std::array<Index, 2>> dims) {
  if (m.rows() != m.cols()) throw Error(ErrorKind::DimensionMismatch, "matrix must be square");
  Json entries = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index k = 0; k < m.cols(); ++k) entries.push_back(complex_to_json(m(i, k)));
  }
  Json j = {{"dim", m.rows()}, {"entries", std::move(entries)}};
  if (dims) j["dims"] = Json::array({(*dims)[0], (*dims)[1]});
  return j;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("dim") || !j.contains("entries")) {
    throw Error(ErrorKind::ParseError, "matrix object needs \"dim\" and \"entries\"");
  }
  if (!j["dim"].is_number_integer() || j["dim"].get<long long>() < 1) {
    throw Error(ErrorKind::ParseError, "\"dim\" must be a positive integer");
  }
  const auto n = static_cast<Index>(j["dim"].get<long long>());
  const Json& e = j["entries"];
  if (!e.is_array() || static_cast<Index>(e.size()) != n * n) {
    throw Error(ErrorKind::ParseError, "\"entries\" must hold dim*dim [re, im] pairs");
  }
  Matrix m(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < n; ++k) m(i, k) = complex_from_json(e[static_cast<std::size_t>(i * n + k)]);
  }
  if (j.contains("dims")) {
    const Json& d = j["dims"];
    if (!d.is_array() || d.size() != 2 || d[0].get<Index>() * d[1].get<Index>() != n) {
      throw Error(ErrorKind::ParseError, "\"dims\" must be [d_S, d_B] with d_S*d_B = dim");
    }
  }
  return m;
}

HermitianOperator load_hermitian(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& ex) {
    throw Error(ErrorKind::ParseError, path + ": " + ex.what());
  }
  return HermitianOperator(matrix_from_json(j));
}

void save_matrix(const std::string& path, const Matrix& m, std::optional<std::array<Index, 2>> dims) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::ParseError, "cannot write " + path);
  out << matrix_to_json(m, dims).dump(2) << '\n';
}

}  // namespace subdyn::io
