#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "csvqa/rng.hpp"
#include "csvqa/scenegen.hpp"
#include "csvqa/sparse_recon.hpp"
#include "csvqa/transforms.hpp"

using namespace csvqa;

namespace {

Eigen::MatrixXd to_eigen(const MeasurementMatrix& phi) {
  Eigen::MatrixXd a(phi.rows, phi.cols);
  for (int i = 0; i < phi.rows; ++i)
    for (int j = 0; j < phi.cols; ++j) a(i, j) = phi.at(i, j);
  return a;
}

Eigen::MatrixXd row_orthonormal(int m, int n, std::uint64_t seed) {
  return to_eigen(sample_matrix(MatrixKind::gaussian, m, n, seed, true));
}

// k-sparse vector with signed unit coefficients on a random support.
Eigen::VectorXd sparse_signal(int n, int k, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
  int placed = 0;
  while (placed < k) {
    const auto idx = static_cast<Eigen::Index>(rng.next_below(static_cast<std::uint64_t>(n)));
    if (s[idx] != 0.0) continue;
    s[idx] = rng.next_below(2) ? 1.0 : -1.0;
    ++placed;
  }
  return s;
}

SolverConfig tight_config(double lambda, int max_iters, double tol = 1e-14) {
  SolverConfig cfg;
  cfg.lambda = lambda;
  cfg.max_iters = max_iters;
  cfg.tolerance = tol;
  return cfg;
}

}  // namespace

TEST_CASE("soft_threshold definition") {
  CHECK(soft_threshold(1.5, 1.0) == doctest::Approx(0.5));
  CHECK(soft_threshold(-0.3, 0.5) == 0.0);
  CHECK(soft_threshold(-2.0, 0.5) == doctest::Approx(-1.5));
  for (double v : {-3.0, -0.1, 0.0, 0.7, 42.0}) CHECK(soft_threshold(v, 0.0) == v);
}

TEST_CASE("power iteration on known spectra") {
  Eigen::MatrixXd a = 2.0 * Eigen::MatrixXd::Identity(4, 4);
  CHECK(power_iteration_lipschitz(a, 100, 1) == doctest::Approx(4.0 * 1.05).epsilon(0.01));

  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 2);
  d(0, 0) = 1.0;
  d(1, 1) = 3.0;
  CHECK(power_iteration_lipschitz(d, 200, 1) == doctest::Approx(9.0 * 1.05).epsilon(0.01));
}

TEST_CASE("power iteration tracks a dense eigensolver within 2%") {
  Rng rng(5);
  Eigen::MatrixXd a(8, 32);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = rng.next_gaussian();
  const double estimate = power_iteration_lipschitz(a, 500, 17) / 1.05;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a.transpose() * a);
  const double reference = eig.eigenvalues().maxCoeff();
  CHECK(std::abs(estimate - reference) <= 0.02 * reference);
}

TEST_CASE("power iteration rejects the zero operator") {
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(4, 4);
  CHECK_THROWS_AS(power_iteration_lipschitz(z, 50, 1), Error);
}

TEST_CASE("ista with identity operator converges to the componentwise prox") {
  const int n = 12;
  Rng rng(9);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = 2.0 * rng.next_double() - 1.0;
  const double lambda = 0.2;
  const auto res = ista(y, Eigen::MatrixXd::Identity(n, n), tight_config(lambda, 3000));
  for (int i = 0; i < n; ++i)
    CHECK(std::abs(res.coefficients[i] - soft_threshold(y[i], lambda)) <= 1e-9);
}

TEST_CASE("ista with zero data stays at zero") {
  const auto res = ista(Eigen::VectorXd::Zero(6), Eigen::MatrixXd::Identity(6, 6),
                        tight_config(0.1, 100, 1e-10));
  CHECK(res.converged);
  CHECK(res.iterations_used <= 6);  // window-of-5 stop right after the first step
  for (int i = 0; i < 6; ++i) CHECK(res.coefficients[i] == 0.0);
}

TEST_CASE("ista recovers a 3-sparse signal against the support least-squares oracle") {
  const int n = 64, m = 32, k = 3;
  const Eigen::MatrixXd a = row_orthonormal(m, n, 77);
  const Eigen::VectorXd truth = sparse_signal(n, k, 78);
  const Eigen::VectorXd y = a * truth;

  // Debiased oracle: least squares restricted to the true support.
  std::vector<Eigen::Index> support;
  for (Eigen::Index i = 0; i < n; ++i)
    if (truth[i] != 0.0) support.push_back(i);
  Eigen::MatrixXd sub(m, static_cast<Eigen::Index>(support.size()));
  for (std::size_t c = 0; c < support.size(); ++c)
    sub.col(static_cast<Eigen::Index>(c)) = a.col(support[c]);
  const Eigen::VectorXd oracle_coeffs = sub.colPivHouseholderQr().solve(y);
  Eigen::VectorXd oracle = Eigen::VectorXd::Zero(n);
  for (std::size_t c = 0; c < support.size(); ++c)
    oracle[support[c]] = oracle_coeffs[static_cast<Eigen::Index>(c)];
  CHECK((oracle - truth).norm() <= 1e-10);  // noiseless: the oracle equals the truth

  const auto res = ista(y, a, tight_config(1e-4, 2000, 1e-14));
  CHECK((res.coefficients - oracle).norm() / oracle.norm() <= 1e-2);
}

TEST_CASE("ista objective is non-increasing on random instances") {
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 32, m = 16;
    const Eigen::MatrixXd a = row_orthonormal(m, n, 1000 + static_cast<std::uint64_t>(trial));
    const Eigen::VectorXd y = a * sparse_signal(n, 4, 2000 + static_cast<std::uint64_t>(trial));
    SolverConfig cfg = tight_config(1e-3, 150, 0.0);
    cfg.record_trace = true;
    const auto res = ista(y, a, cfg);
    REQUIRE(res.objective_trace.size() >= 2);
    for (std::size_t i = 1; i < res.objective_trace.size(); ++i)
      CHECK(res.objective_trace[i] <= res.objective_trace[i - 1] + 1e-12);
  }
}

TEST_CASE("fista shares fixed points with ista on the identity operator") {
  const int n = 10;
  Rng rng(31);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = 2.0 * rng.next_double() - 1.0;
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  const auto r1 = ista(y, a, tight_config(0.15, 3000));
  const auto r2 = fista(y, a, tight_config(0.15, 3000));
  CHECK((r1.coefficients - r2.coefficients).lpNorm<Eigen::Infinity>() <= 1e-9);
  CHECK(std::abs(r1.final_objective - r2.final_objective) <= 1e-6);
}

TEST_CASE("fista beats ista at a fixed iteration budget on most instances") {
  int wins = 0;
  const int trials = 20;
  for (int trial = 0; trial < trials; ++trial) {
    const int n = 256, m = 128;
    const Eigen::MatrixXd a = row_orthonormal(m, n, 500 + static_cast<std::uint64_t>(trial));
    const Eigen::VectorXd y = a * sparse_signal(n, 8, 600 + static_cast<std::uint64_t>(trial));
    const SolverConfig cfg = tight_config(1e-3, 200, 0.0);  // run out the budget
    const auto ri = ista(y, a, cfg);
    const auto rf = fista(y, a, cfg);
    if (rf.final_objective <= ri.final_objective) ++wins;
  }
  CHECK(wins >= 18);
}

TEST_CASE("fista with zero lambda solves a well-conditioned square system") {
  const int n = 16;
  Rng rng(3);
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) += 0.3 * rng.next_gaussian() / std::sqrt(n);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = rng.next_gaussian();
  const auto res = fista(y, a, tight_config(0.0, 5000, 0.0));
  CHECK((y - a * res.coefficients).norm() / y.norm() <= 1e-6);
}

TEST_CASE("solver reports divergence for an oversized fixed step") {
  const int n = 16;
  const Eigen::MatrixXd a = row_orthonormal(8, n, 4);
  const Eigen::VectorXd y = a * sparse_signal(n, 2, 5);
  SolverConfig cfg = tight_config(1e-3, 5000, 0.0);
  cfg.step_mode = StepMode::fixed;
  cfg.fixed_step = 50.0;  // safe step is ~1
  try {
    ista(y, a, cfg);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == Error::Kind::divergence);
  }
}

TEST_CASE("omp selects the single matching atom") {
  const Eigen::MatrixXd a = row_orthonormal(16, 16, 8).transpose();  // orthonormal columns
  const Eigen::VectorXd y = 3.0 * a.col(2);
  const auto res = omp(y, a, 1);
  CHECK(res.coefficients[2] == doctest::Approx(3.0).epsilon(1e-10));
  for (Eigen::Index i = 0; i < 16; ++i)
    if (i != 2) CHECK(res.coefficients[i] == 0.0);
  CHECK(std::sqrt(2.0 * res.final_objective) <= 1e-10);
}

TEST_CASE("omp recovers a two-atom combination") {
  const Eigen::MatrixXd a = row_orthonormal(16, 16, 21).transpose();
  const Eigen::VectorXd y = 2.0 * a.col(3) - a.col(7);
  const auto res = omp(y, a, 2);
  CHECK(std::abs(res.coefficients[3] - 2.0) <= 1e-10);
  CHECK(std::abs(res.coefficients[7] + 1.0) <= 1e-10);
}

TEST_CASE("omp with k = m on a full-rank system zeroes the residual") {
  const int m = 8;
  Rng rng(13);
  Eigen::MatrixXd a(m, 12);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < 12; ++j) a(i, j) = rng.next_gaussian();
  Eigen::VectorXd y(m);
  for (Eigen::Index i = 0; i < m; ++i) y[i] = rng.next_gaussian();
  const auto res = omp(y, a, m);
  CHECK((y - a * res.coefficients).norm() <= 1e-8);
}

TEST_CASE("omp residual stays orthogonal to the selected columns after every step") {
  const int n = 32, m = 16;
  const Eigen::MatrixXd a = row_orthonormal(m, n, 55);
  const Eigen::VectorXd y = a * sparse_signal(n, 6, 56);
  // greedy selection is prefix-stable: running with budget k reproduces the
  // state after the k-th step
  for (int k = 1; k <= 6; ++k) {
    const auto res = omp(y, a, k);
    const Eigen::VectorXd residual = y - a * res.coefficients;
    for (Eigen::Index j = 0; j < n; ++j)
      if (res.coefficients[j] != 0.0) CHECK(std::abs(a.col(j).dot(residual)) <= 1e-8);
  }
}

TEST_CASE("omp flags a singular support system") {
  Eigen::MatrixXd a(4, 3);
  a.col(0) = Eigen::Vector4d(1, 0, 0, 0);
  a.col(1) = a.col(0);  // duplicate atom
  a.col(2) = Eigen::Vector4d(0, 1, 0, 0);
  const Eigen::VectorXd y = a.col(0) + a.col(2);
  try {
    omp(y, a, 3);
    FAIL("expected ill-conditioned support");
  } catch (const Error& e) {
    CHECK(e.kind() == Error::Kind::ill_conditioned);
  }
}

TEST_CASE("omp validates the sparsity budget") {
  const Eigen::MatrixXd a = row_orthonormal(4, 8, 2);
  const Eigen::VectorXd y = Eigen::VectorXd::Ones(4);
  CHECK_THROWS_AS(omp(y, a, 5), Error);
  CHECK_THROWS_AS(omp(y, a, 0), Error);
}

TEST_CASE("debias on detected support recovers exact sparse solutions") {
  const int n = 64, m = 32;
  const Eigen::MatrixXd a = row_orthonormal(m, n, 91);
  const Eigen::VectorXd truth = sparse_signal(n, 5, 92);
  const Eigen::VectorXd y = a * truth;
  const auto res = fista(y, a, tight_config(1e-4, 2000, 1e-14));
  const Eigen::VectorXd debiased = debias_on_support(y, a, res.coefficients);
  CHECK((debiased - truth).norm() / truth.norm() <= 1e-6);
}

TEST_CASE("full-rate reconstruction of a rendered scene is near exact") {
  BlockSpec spec;
  const int n = spec.pixels_per_block();
  const auto phi = sample_matrix(MatrixKind::gaussian, n, n, 7, true);
  const Image img = render(generate_scene(123, 4));
  const auto ms = measure(img, spec, phi);
  SolverConfig cfg;
  cfg.max_iters = 50;
  ReconDiagnostics diag;
  const Image recon = reconstruct_image(ms, phi, spec, ReconMethod::fista, cfg, &diag);
  CHECK(psnr(img, recon) >= 60.0);
  CHECK(diag.blocks.size() == static_cast<std::size_t>(spec.blocks_total()));
}

TEST_CASE("reconstructing zero measurements returns the zero image") {
  BlockSpec spec;
  const auto phi = sample_matrix(MatrixKind::gaussian, 64, spec.pixels_per_block(), 7, true);
  Image zero(spec.channels, spec.image_height, spec.image_width, 0.0);
  const auto ms = measure(zero, spec, phi);
  const Image recon = reconstruct_image(ms, phi, spec, ReconMethod::fista, SolverConfig{});
  for (double v : recon.data) CHECK(v == 0.0);
}

TEST_CASE("mean reconstruction PSNR increases with the measurement rate") {
  BlockSpec spec;
  const int n = spec.pixels_per_block();
  std::vector<Image> corpus;
  for (std::uint64_t i = 0; i < 20; ++i) corpus.push_back(render(generate_scene(3000 + i, 4)));

  double previous = -1.0;
  for (double rate : {0.04, 0.10, 0.25}) {
    const int m = measurements_for_rate(rate, n);
    const auto phi = sample_matrix(MatrixKind::gaussian, m, n, 7, true);
    double mean_psnr = 0.0;
    for (const auto& img : corpus) {
      const auto ms = measure(img, spec, phi);
      const Image recon = reconstruct_image(ms, phi, spec, ReconMethod::fista, SolverConfig{});
      mean_psnr += psnr(img, recon);
    }
    mean_psnr /= static_cast<double>(corpus.size());
    CHECK(mean_psnr > previous);
    previous = mean_psnr;
  }
}

TEST_CASE("psnr arithmetic and sentinels") {
  Image a(1, 4, 4, 0.5);
  CHECK(std::isinf(psnr(a, a)));

  Image b = a;
  for (auto& v : b.data) v += 0.1;  // MSE 0.01
  CHECK(psnr(a, b, 1.0) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(psnr(a, b, 1.0) == psnr(b, a, 1.0));

  Image c = a;
  for (auto& v : c.data) v += 1.0;  // uniform error 1 at peak 255
  CHECK(psnr(a, c, 255.0) == doctest::Approx(10.0 * std::log10(255.0 * 255.0)).epsilon(1e-9));
}
