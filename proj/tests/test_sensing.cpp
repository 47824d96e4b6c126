#include <doctest.h>

#include <cmath>
#include <vector>

#include "csvqa/rng.hpp"
#include "csvqa/sensing.hpp"

using namespace csvqa;

namespace {

Image random_image(const BlockSpec& spec, std::uint64_t seed) {
  Image img(spec.channels, spec.image_height, spec.image_width);
  Rng rng(seed);
  for (auto& v : img.data) v = rng.next_double();
  return img;
}

double max_gram_deviation(const MeasurementMatrix& phi) {
  double worst = 0.0;
  for (int i = 0; i < phi.rows; ++i)
    for (int j = 0; j < phi.rows; ++j) {
      double dot = 0.0;
      for (int k = 0; k < phi.cols; ++k) dot += phi.at(i, k) * phi.at(j, k);
      worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
    }
  return worst;
}

}  // namespace

TEST_CASE("sample_matrix is deterministic in (kind, m, n, seed)") {
  const auto a = sample_matrix(MatrixKind::gaussian, 8, 64, 42);
  const auto b = sample_matrix(MatrixKind::gaussian, 8, 64, 42);
  REQUIRE(a.entries.size() == b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) CHECK(a.entries[i] == b.entries[i]);

  const auto c = sample_matrix(MatrixKind::gaussian, 8, 64, 43);
  CHECK(a.entries != c.entries);
}

TEST_CASE("gaussian entry statistics match N(0, 1/n)") {
  const int m = 100, n = 256;
  const auto phi = sample_matrix(MatrixKind::gaussian, m, n, 1);
  double sum = 0.0, sq = 0.0;
  for (double v : phi.entries) {
    sum += v;
    sq += v * v;
  }
  const double count = static_cast<double>(phi.entries.size());
  const double mean = sum / count;
  const double var = sq / count - mean * mean;
  // mean of N*m*n samples of sd 1/sqrt(n): 3 sigma bound
  CHECK(std::abs(mean) <= 3.0 / std::sqrt(count * n));
  CHECK(std::abs(var - 1.0 / n) <= 0.05 / n);
}

TEST_CASE("bernoulli entries are +-1/sqrt(n)") {
  const int n = 64;
  const auto phi = sample_matrix(MatrixKind::bernoulli, 16, n, 3);
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  int plus = 0;
  for (double v : phi.entries) {
    CHECK(std::abs(std::abs(v) - s) < 1e-15);
    if (v > 0) ++plus;
  }
  CHECK(plus > 400);
  CHECK(plus < 624);
}

TEST_CASE("full-rate orthonormalization yields an orthogonal matrix") {
  const auto phi = sample_matrix(MatrixKind::gaussian, 16, 16, 7, true);
  CHECK(phi.row_orthonormal);
  CHECK(max_gram_deviation(phi) <= 1e-9);
}

TEST_CASE("orthonormalize_rows is a fixed point on orthonormal input") {
  const auto phi = sample_matrix(MatrixKind::gaussian, 8, 64, 9, true);
  const auto again = orthonormalize_rows(phi);
  for (std::size_t i = 0; i < phi.entries.size(); ++i)
    CHECK(std::abs(phi.entries[i] - again.entries[i]) <= 1e-12);
}

TEST_CASE("orthonormalize_rows scales axis rows to unit") {
  MeasurementMatrix phi;
  phi.rows = 2;
  phi.cols = 2;
  phi.entries = {2.0, 0.0, 0.0, 3.0};
  const auto q = orthonormalize_rows(phi);
  CHECK(q.entries[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(q.entries[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(q.entries[2] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(q.entries[3] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("orthonormalize_rows preserves the row span") {
  const auto phi = sample_matrix(MatrixKind::gaussian, 8, 64, 21);
  const auto q = orthonormalize_rows(phi);
  CHECK(max_gram_deviation(q) <= 1e-9);
  // residual of projecting each original row onto the new basis is zero
  for (int i = 0; i < phi.rows; ++i) {
    std::vector<double> residual(phi.row(i).begin(), phi.row(i).end());
    for (int j = 0; j < q.rows; ++j) {
      double dot = 0.0;
      for (int k = 0; k < q.cols; ++k) dot += residual[static_cast<std::size_t>(k)] * q.at(j, k);
      for (int k = 0; k < q.cols; ++k) residual[static_cast<std::size_t>(k)] -= dot * q.at(j, k);
    }
    double norm = 0.0;
    for (double v : residual) norm += v * v;
    CHECK(std::sqrt(norm) <= 1e-9);
  }
}

TEST_CASE("orthonormalize_rows reports the dependent row") {
  MeasurementMatrix phi;
  phi.rows = 3;
  phi.cols = 4;
  phi.entries = {1, 0, 0, 0,
                 0, 1, 0, 0,
                 1, 1, 0, 0};  // row 2 dependent
  try {
    orthonormalize_rows(phi);
    FAIL("expected rank-deficiency error");
  } catch (const Error& e) {
    CHECK(e.kind() == Error::Kind::rank_deficient);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("sample_matrix rejects m > n") {
  CHECK_THROWS_AS(sample_matrix(MatrixKind::gaussian, 65, 64, 0), Error);
}

TEST_CASE("measure with identity operator returns flattened blocks") {
  BlockSpec spec;
  spec.image_height = 8;
  spec.image_width = 8;
  spec.channels = 1;
  spec.block_size = 4;
  const int n = spec.pixels_per_block();
  MeasurementMatrix eye;
  eye.rows = n;
  eye.cols = n;
  eye.entries.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) eye.entries[static_cast<std::size_t>(i) * n + i] = 1.0;

  const Image img = random_image(spec, 5);
  const auto ms = measure(img, spec, eye);
  CHECK(ms.vector_count() == 4);
  CHECK(ms.measurement_rate == doctest::Approx(1.0));
  for (int by = 0; by < 2; ++by)
    for (int bx = 0; bx < 2; ++bx) {
      const auto y = ms.vec(0, by, bx);
      for (int py = 0; py < 4; ++py)
        for (int px = 0; px < 4; ++px)
          CHECK(y[py * 4 + px] ==
                doctest::Approx(img.at(0, by * 4 + py, bx * 4 + px)).epsilon(1e-12));
    }
}

TEST_CASE("measure of the zero image is zero") {
  BlockSpec spec;
  const auto phi = sample_matrix(MatrixKind::gaussian, 64, spec.pixels_per_block(), 2);
  Image zero(spec.channels, spec.image_height, spec.image_width, 0.0);
  const auto ms = measure(zero, spec, phi);
  for (double v : ms.values) CHECK(v == 0.0);
}

TEST_CASE("measure is linear") {
  BlockSpec spec;
  const auto phi = sample_matrix(MatrixKind::gaussian, 64, spec.pixels_per_block(), 17);
  const double a = 0.3, b = -1.7;
  for (int trial = 0; trial < 100; ++trial) {
    const Image x1 = random_image(spec, 100 + static_cast<std::uint64_t>(trial));
    const Image x2 = random_image(spec, 900 + static_cast<std::uint64_t>(trial));
    Image combo(spec.channels, spec.image_height, spec.image_width);
    for (std::size_t i = 0; i < combo.data.size(); ++i)
      combo.data[i] = a * x1.data[i] + b * x2.data[i];
    const auto m1 = measure(x1, spec, phi);
    const auto m2 = measure(x2, spec, phi);
    const auto mc = measure(combo, spec, phi);
    for (std::size_t i = 0; i < mc.values.size(); ++i)
      CHECK(std::abs(mc.values[i] - (a * m1.values[i] + b * m2.values[i])) <= 1e-9);
  }
}

TEST_CASE("adjoint_embed inverts measure at full rate with orthogonal phi") {
  BlockSpec spec;
  const int n = spec.pixels_per_block();
  const auto phi = sample_matrix(MatrixKind::gaussian, n, n, 7, true);
  const Image img = random_image(spec, 33);
  const Image back = adjoint_embed(measure(img, spec, phi), phi, spec);
  REQUIRE(back.same_shape(img));
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(std::abs(back.data[i] - img.data[i]) <= 1e-9);
}

TEST_CASE("adjoint_embed of zero measurements is the zero image") {
  BlockSpec spec;
  const auto phi = sample_matrix(MatrixKind::gaussian, 32, spec.pixels_per_block(), 3);
  MeasurementSet ms;
  ms.block_grid_rows = spec.block_rows();
  ms.block_grid_cols = spec.block_cols();
  ms.channels = spec.channels;
  ms.m = 32;
  ms.measurement_rate = measurement_rate(phi);
  ms.values.assign(static_cast<std::size_t>(ms.vector_count()) * ms.m, 0.0);
  const Image img = adjoint_embed(ms, phi, spec);
  for (double v : img.data) CHECK(v == 0.0);
}

TEST_CASE("adjoint_embed matches a naive triple-loop product") {
  BlockSpec spec;
  spec.image_height = 8;
  spec.image_width = 8;
  spec.channels = 1;
  spec.block_size = 8;
  const auto phi = sample_matrix(MatrixKind::gaussian, 8, 64, 19);
  const Image img = random_image(spec, 77);
  const auto ms = measure(img, spec, phi);
  const Image embedded = adjoint_embed(ms, phi, spec);

  // independent naive multiply: block = Phi^T (Phi x)
  std::vector<double> x(64);
  for (int py = 0; py < 8; ++py)
    for (int px = 0; px < 8; ++px) x[static_cast<std::size_t>(py) * 8 + px] = img.at(0, py, px);
  std::vector<double> y(8, 0.0);
  for (int i = 0; i < 8; ++i)
    for (int k = 0; k < 64; ++k) y[static_cast<std::size_t>(i)] += phi.at(i, k) * x[static_cast<std::size_t>(k)];
  std::vector<double> back(64, 0.0);
  for (int k = 0; k < 64; ++k)
    for (int i = 0; i < 8; ++i) back[static_cast<std::size_t>(k)] += phi.at(i, k) * y[static_cast<std::size_t>(i)];
  for (int py = 0; py < 8; ++py)
    for (int px = 0; px < 8; ++px)
      CHECK(std::abs(embedded.at(0, py, px) - back[static_cast<std::size_t>(py) * 8 + px]) <= 1e-12);
}

TEST_CASE("energy bound for row-orthonormal matrices") {
  BlockSpec spec;
  const auto phi = sample_matrix(MatrixKind::gaussian, 64, spec.pixels_per_block(), 23, true);
  const Image img = random_image(spec, 41);
  const auto ms = measure(img, spec, phi);
  const int b = spec.block_size;
  for (int c = 0; c < spec.channels; ++c)
    for (int by = 0; by < spec.block_rows(); ++by)
      for (int bx = 0; bx < spec.block_cols(); ++bx) {
        double block_norm = 0.0;
        for (int py = 0; py < b; ++py)
          for (int px = 0; px < b; ++px) {
            const double v = img.at(c, by * b + py, bx * b + px);
            block_norm += v * v;
          }
        double y_norm = 0.0;
        for (double v : ms.vec(c, by, bx)) y_norm += v * v;
        CHECK(std::sqrt(y_norm) <= std::sqrt(block_norm) + 1e-9);
      }
}

TEST_CASE("measurement_rate arithmetic") {
  MeasurementMatrix phi;
  phi.rows = 256;
  phi.cols = 1024;
  CHECK(measurement_rate(phi) == doctest::Approx(0.25).epsilon(1e-15));
  phi.rows = 1024;
  CHECK(measurement_rate(phi) == doctest::Approx(1.0).epsilon(1e-15));
  phi.rows = 41;
  CHECK(measurement_rate(phi) == doctest::Approx(41.0 / 1024.0).epsilon(1e-12));
}

TEST_CASE("measurements_for_rate clamps and rounds") {
  CHECK(measurements_for_rate(0.25, 256) == 64);
  CHECK(measurements_for_rate(0.04, 256) == 10);
  CHECK(measurements_for_rate(1.0, 256) == 256);
  CHECK(measurements_for_rate(0.0001, 256) == 1);
  CHECK_THROWS_AS(measurements_for_rate(1.5, 256), Error);
}

TEST_CASE("measure rejects mismatched dimensions") {
  BlockSpec spec;
  const auto phi = sample_matrix(MatrixKind::gaussian, 8, 64, 2);  // cols != 256
  const Image img = random_image(spec, 1);
  CHECK_THROWS_AS(measure(img, spec, phi), Error);
}
