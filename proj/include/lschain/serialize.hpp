#ifndef LSCHAIN_SERIALIZE_HPP
#define LSCHAIN_SERIALIZE_HPP

#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <string>

#include "lschain/types.hpp"

namespace lschain {

using Json = nlohmann::ordered_json;

/// Lossless double -> string using C99 hex-float notation.
inline std::string double_to_hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return std::string(buf);
}

/// Inverse of double_to_hex (also accepts plain decimal strings).
inline double hex_to_double(const std::string& s) {
  const char* begin = s.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin || end == nullptr || *end != '\0')
    throw ConfigError("hex_to_double: cannot parse '" + s + "'");
  return v;
}

/// Shortest decimal form that still round-trips; used for human-facing output.
inline std::string double_to_decimal(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline Json complex_to_json(const Complex& z) {
  return Json::array({double_to_hex(z.real()), double_to_hex(z.imag())});
}

inline Complex complex_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 2)
    throw ConfigError("complex_from_json: expected [re, im]");
  return Complex(hex_to_double(j[0].get<std::string>()),
                 hex_to_double(j[1].get<std::string>()));
}

/// Matrix as row-major nested arrays of [re, im] hex strings.
inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(complex_to_json(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const Json& j) {
  if (!j.is_array()) throw ConfigError("matrix_from_json: expected array of rows");
  const Eigen::Index nrows = static_cast<Eigen::Index>(j.size());
  if (nrows == 0) return Matrix(0, 0);
  const Eigen::Index ncols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(nrows, ncols);
  for (Eigen::Index i = 0; i < nrows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != ncols)
      throw ConfigError("matrix_from_json: ragged rows");
    for (Eigen::Index c = 0; c < ncols; ++c) m(i, c) = complex_from_json(j[i][c]);
  }
  return m;
}

inline Json vector_to_json(const Vector& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(complex_to_json(v(i)));
  return arr;
}

inline Vector vector_from_json(const Json& j) {
  if (!j.is_array()) throw ConfigError("vector_from_json: expected array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = complex_from_json(j[i]);
  return v;
}

}  // namespace lschain

#endif  // LSCHAIN_SERIALIZE_HPP
