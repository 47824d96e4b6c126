#include "csvqa/sensing.hpp"

#include <cmath>

#include "csvqa/rng.hpp"

namespace csvqa {

void BlockSpec::validate() const {
  require(block_size >= 2, Error::Kind::invalid_dimensions, "block_size must be >= 2");
  require(channels == 1 || channels == 3, Error::Kind::invalid_dimensions,
          "channels must be 1 or 3");
  require(image_height > 0 && image_width > 0, Error::Kind::invalid_dimensions,
          "image dimensions must be positive");
  require(image_height % block_size == 0 && image_width % block_size == 0,
          Error::Kind::invalid_dimensions,
          "image dimensions must be divisible by block_size");
}

std::string to_string(MatrixKind kind) {
  return kind == MatrixKind::gaussian ? "gaussian" : "bernoulli";
}

MatrixKind matrix_kind_from_string(const std::string& s) {
  if (s == "gaussian") return MatrixKind::gaussian;
  if (s == "bernoulli") return MatrixKind::bernoulli;
  throw_error(Error::Kind::invalid_argument, "unknown matrix kind: " + s);
}

MeasurementMatrix sample_matrix(MatrixKind kind, int m, int n, std::uint64_t seed,
                                bool orthonormalize) {
  require(m >= 1 && m <= n, Error::Kind::invalid_dimensions,
          "sample_matrix: need 1 <= m <= n, got m=" + std::to_string(m) +
              " n=" + std::to_string(n));
  MeasurementMatrix phi;
  phi.rows = m;
  phi.cols = n;
  phi.kind = kind;
  phi.seed = seed;
  phi.entries.resize(static_cast<std::size_t>(m) * n);

  Rng rng = Rng(seed).split("measurement-matrix");
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t i = 0; i < phi.entries.size(); ++i) {
    if (kind == MatrixKind::gaussian) {
      phi.entries[i] = rng.next_gaussian() * scale;
    } else {
      phi.entries[i] = (rng.next_u64() & 1u) ? scale : -scale;
    }
  }
  if (orthonormalize) phi = orthonormalize_rows(phi);
  return phi;
}

MeasurementMatrix orthonormalize_rows(const MeasurementMatrix& phi) {
  constexpr double kPivot = 1e-10;
  MeasurementMatrix out = phi;
  const int m = out.rows;
  const int n = out.cols;
  auto* q = out.entries.data();

  for (int i = 0; i < m; ++i) {
    double* qi = q + static_cast<std::size_t>(i) * n;
    // Two projection passes; the second removes the rounding residue left by
    // the first when earlier rows are nearly parallel.
    for (int pass = 0; pass < 2; ++pass) {
      for (int j = 0; j < i; ++j) {
        const double* qj = q + static_cast<std::size_t>(j) * n;
        double dot = 0.0;
        for (int k = 0; k < n; ++k) dot += qi[k] * qj[k];
        for (int k = 0; k < n; ++k) qi[k] -= dot * qj[k];
      }
    }
    double norm2 = 0.0;
    for (int k = 0; k < n; ++k) norm2 += qi[k] * qi[k];
    const double norm = std::sqrt(norm2);
    require(norm >= kPivot, Error::Kind::rank_deficient,
            "orthonormalize_rows: row " + std::to_string(i) +
                " is numerically dependent on earlier rows");
    for (int k = 0; k < n; ++k) qi[k] /= norm;
  }
  out.row_orthonormal = true;
  return out;
}

MeasurementSet measure(const Image& image, const BlockSpec& spec, const MeasurementMatrix& phi) {
  spec.validate();
  require(phi.cols == spec.pixels_per_block(), Error::Kind::invalid_dimensions,
          "measure: phi.cols must equal block_size^2");
  require(image.channels == spec.channels && image.height == spec.image_height &&
              image.width == spec.image_width,
          Error::Kind::invalid_dimensions, "measure: image does not match spec");

  MeasurementSet ms;
  ms.block_grid_rows = spec.block_rows();
  ms.block_grid_cols = spec.block_cols();
  ms.channels = spec.channels;
  ms.m = phi.rows;
  ms.measurement_rate = measurement_rate(phi);
  ms.values.resize(static_cast<std::size_t>(ms.vector_count()) * ms.m);

  const int b = spec.block_size;
  const int n = phi.cols;
  std::vector<double> block(n);
  for (int c = 0; c < spec.channels; ++c) {
    for (int by = 0; by < ms.block_grid_rows; ++by) {
      for (int bx = 0; bx < ms.block_grid_cols; ++bx) {
        for (int py = 0; py < b; ++py)
          for (int px = 0; px < b; ++px)
            block[py * b + px] = image.at(c, by * b + py, bx * b + px);
        auto y = ms.vec(c, by, bx);
        for (int i = 0; i < phi.rows; ++i) {
          const double* row = phi.entries.data() + static_cast<std::size_t>(i) * n;
          double acc = 0.0;
          for (int k = 0; k < n; ++k) acc += row[k] * block[k];
          y[i] = acc;
        }
      }
    }
  }
  return ms;
}

Image adjoint_embed(const MeasurementSet& ms, const MeasurementMatrix& phi,
                    const BlockSpec& spec) {
  spec.validate();
  require(phi.cols == spec.pixels_per_block(), Error::Kind::invalid_dimensions,
          "adjoint_embed: phi.cols must equal block_size^2");
  require(ms.m == phi.rows && ms.channels == spec.channels &&
              ms.block_grid_rows == spec.block_rows() && ms.block_grid_cols == spec.block_cols(),
          Error::Kind::invalid_dimensions, "adjoint_embed: measurement set does not match spec");

  Image out(spec.channels, spec.image_height, spec.image_width);
  const int b = spec.block_size;
  const int n = phi.cols;
  std::vector<double> block(n);
  for (int c = 0; c < spec.channels; ++c) {
    for (int by = 0; by < ms.block_grid_rows; ++by) {
      for (int bx = 0; bx < ms.block_grid_cols; ++bx) {
        auto y = ms.vec(c, by, bx);
        for (int k = 0; k < n; ++k) {
          double acc = 0.0;
          for (int i = 0; i < phi.rows; ++i)
            acc += phi.entries[static_cast<std::size_t>(i) * n + k] * y[i];
          block[k] = acc;
        }
        for (int py = 0; py < b; ++py)
          for (int px = 0; px < b; ++px)
            out.at(c, by * b + py, bx * b + px) = block[py * b + px];
      }
    }
  }
  return out;
}

double measurement_rate(const MeasurementMatrix& phi) {
  return static_cast<double>(phi.rows) / static_cast<double>(phi.cols);
}

int measurements_for_rate(double rate, int n) {
  require(rate > 0.0 && rate <= 1.0, Error::Kind::invalid_argument,
          "measurement rate must lie in (0, 1]");
  int m = static_cast<int>(std::lround(rate * n));
  if (m < 1) m = 1;
  if (m > n) m = n;
  return m;
}

}  // namespace csvqa
