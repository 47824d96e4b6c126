#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csvqa/image.hpp"

namespace csvqa {

// Block partitioning of an image: non-overlapping B x B blocks per channel,
// enumerated in row-major block order.
struct BlockSpec {
  int image_height = 32;
  int image_width = 32;
  int channels = 3;
  int block_size = 16;

  int block_rows() const { return image_height / block_size; }
  int block_cols() const { return image_width / block_size; }
  int pixels_per_block() const { return block_size * block_size; }
  int blocks_total() const { return block_rows() * block_cols() * channels; }

  void validate() const;
};

enum class MatrixKind { gaussian, bernoulli };

std::string to_string(MatrixKind kind);
MatrixKind matrix_kind_from_string(const std::string& s);

// Sensing operator Phi. (kind, rows, cols, seed) is the complete
// serialization: matrices are regenerated from parameters, never stored.
struct MeasurementMatrix {
  int rows = 0;  // m
  int cols = 0;  // n = B^2
  MatrixKind kind = MatrixKind::gaussian;
  std::uint64_t seed = 0;
  bool row_orthonormal = false;
  std::vector<double> entries;  // row-major, rows x cols

  double at(int i, int j) const { return entries[static_cast<std::size_t>(i) * cols + j]; }
  std::span<const double> row(int i) const {
    return {entries.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)};
  }
};

// Per-block measurement vectors y, ordered [channel][block_row][block_col].
struct MeasurementSet {
  int block_grid_rows = 0;
  int block_grid_cols = 0;
  int channels = 0;
  int m = 0;
  double measurement_rate = 0.0;  // m / n
  std::vector<double> values;     // vector_count x m, flat

  int vector_count() const { return block_grid_rows * block_grid_cols * channels; }
  std::size_t vector_index(int c, int by, int bx) const {
    return (static_cast<std::size_t>(c) * block_grid_rows + by) * block_grid_cols + bx;
  }
  std::span<const double> vec(int c, int by, int bx) const {
    return {values.data() + vector_index(c, by, bx) * m, static_cast<std::size_t>(m)};
  }
  std::span<double> vec(int c, int by, int bx) {
    return {values.data() + vector_index(c, by, bx) * m, static_cast<std::size_t>(m)};
  }
};

// Draws Phi with i.i.d. entries: gaussian N(0, 1/n) or bernoulli +-1/sqrt(n).
// With orthonormalize, rows are replaced by an orthonormal basis of their
// span. Identical (kind, m, n, seed) always reproduce identical entries.
MeasurementMatrix sample_matrix(MatrixKind kind, int m, int n, std::uint64_t seed,
                                bool orthonormalize = false);

// Modified Gram-Schmidt with one re-orthogonalization pass. Pivot threshold
// 1e-10; failure names the offending row.
MeasurementMatrix orthonormalize_rows(const MeasurementMatrix& phi);

// y = Phi * vec(block) for every channel and block, vec() in row-major pixel
// order. Blocks are independent, so the loop may be parallelized; output
// ordering is fixed regardless of schedule.
MeasurementSet measure(const Image& image, const BlockSpec& spec, const MeasurementMatrix& phi);

// Proxy image with each block set to unvec(Phi^T * y). For orthogonal Phi at
// full rate this inverts measure() exactly.
Image adjoint_embed(const MeasurementSet& ms, const MeasurementMatrix& phi, const BlockSpec& spec);

double measurement_rate(const MeasurementMatrix& phi);

// Measurements needed for a target rate: clamp(round(rate * n), 1, n).
int measurements_for_rate(double rate, int n);

}  // namespace csvqa
