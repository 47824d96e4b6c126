#include "csvqa/transforms.hpp"

#include <cmath>
#include <numbers>

#include "csvqa/errors.hpp"

namespace csvqa {

namespace {

// Row table of the 1-D orthonormal DCT-II: c[u][x] = alpha_u cos(pi (2x+1) u / 2B).
std::vector<double> dct_table(int b) {
  std::vector<double> c(static_cast<std::size_t>(b) * b);
  const double a0 = std::sqrt(1.0 / b);
  const double au = std::sqrt(2.0 / b);
  for (int u = 0; u < b; ++u)
    for (int x = 0; x < b; ++x)
      c[static_cast<std::size_t>(u) * b + x] =
          (u == 0 ? a0 : au) * std::cos(std::numbers::pi * (2.0 * x + 1.0) * u / (2.0 * b));
  return c;
}

void check_block(const std::vector<double>& v, int b) {
  require(b >= 2, Error::Kind::invalid_dimensions, "block size must be >= 2");
  require(v.size() == static_cast<std::size_t>(b) * b, Error::Kind::invalid_dimensions,
          "block length must equal B^2");
}

// out = C * X * C^T when transpose == false, C^T * X * C otherwise.
std::vector<double> apply_separable(const std::vector<double>& x, int b, bool transpose) {
  const auto c = dct_table(b);
  auto cof = [&](int i, int j) {
    return transpose ? c[static_cast<std::size_t>(j) * b + i] : c[static_cast<std::size_t>(i) * b + j];
  };
  std::vector<double> tmp(static_cast<std::size_t>(b) * b, 0.0);
  // rows: tmp = X * M^T with M = C (or C^T)
  for (int i = 0; i < b; ++i)
    for (int u = 0; u < b; ++u) {
      double acc = 0.0;
      for (int j = 0; j < b; ++j) acc += x[static_cast<std::size_t>(i) * b + j] * cof(u, j);
      tmp[static_cast<std::size_t>(i) * b + u] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(b) * b, 0.0);
  // columns
  for (int u = 0; u < b; ++u)
    for (int v = 0; v < b; ++v) {
      double acc = 0.0;
      for (int i = 0; i < b; ++i) acc += cof(u, i) * tmp[static_cast<std::size_t>(i) * b + v];
      out[static_cast<std::size_t>(u) * b + v] = acc;
    }
  return out;
}

}  // namespace

std::vector<double> dct2(const std::vector<double>& block, int b) {
  check_block(block, b);
  return apply_separable(block, b, false);
}

std::vector<double> idct2(const std::vector<double>& coeffs, int b) {
  check_block(coeffs, b);
  return apply_separable(coeffs, b, true);
}

Eigen::MatrixXd materialize_basis(int b) {
  require(b >= 2, Error::Kind::invalid_dimensions, "block size must be >= 2");
  const int n = b * b;
  Eigen::MatrixXd psi(n, n);
  std::vector<double> e(static_cast<std::size_t>(n), 0.0);
  for (int k = 0; k < n; ++k) {
    e[k] = 1.0;
    const auto col = idct2(e, b);  // column k of Psi^T
    e[k] = 0.0;
    for (int p = 0; p < n; ++p) psi(k, p) = col[p];  // row k of Psi
  }
  return psi;
}

}  // namespace csvqa
