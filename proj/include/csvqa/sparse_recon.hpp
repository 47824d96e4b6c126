#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "csvqa/image.hpp"
#include "csvqa/sensing.hpp"

namespace csvqa {

enum class StepMode { lipschitz_power_iteration, fixed };
enum class ReconMethod { ista, fista, omp };

std::string to_string(ReconMethod m);
ReconMethod recon_method_from_string(const std::string& s);

struct SolverConfig {
  // lambda < 0 selects the scale-adaptive per-block default inside
  // reconstruct_image: 0.01 * (1 - m/n) * ||A^T y||_inf. The (1 - m/n)
  // factor vanishes at full rate, where the system is exactly determined and
  // the l1 prior would only bias the solution. ista()/fista() themselves
  // require an explicit lambda >= 0.
  double lambda = -1.0;
  int max_iters = 400;
  double tolerance = 1e-8;  // relative objective change, over a 5-iteration window
  StepMode step_mode = StepMode::lipschitz_power_iteration;
  double fixed_step = 0.0;
  bool record_trace = false;
  int omp_sparsity = 0;  // 0 selects max(1, m/4)
  std::uint64_t seed = 0x5eed;
};

struct ReconResult {
  Eigen::VectorXd coefficients;  // s, length n
  Eigen::VectorXd block;         // x_hat = Psi^T s (filled by reconstruct_image paths)
  int iterations_used = 0;
  double final_objective = 0.0;
  bool converged = false;
  std::vector<double> objective_trace;
};

struct BlockDiagnostics {
  int iterations = 0;
  double objective = 0.0;
  bool converged = false;
};

struct ReconDiagnostics {
  std::vector<BlockDiagnostics> blocks;
  double psnr_db = 0.0;  // filled by callers that know the reference
};

double soft_threshold(double v, double tau);

// Largest eigenvalue of A^T A estimated by power iteration (seeded start
// vector), inflated by a 1.05 safety factor. iters >= 10.
double power_iteration_lipschitz(const Eigen::MatrixXd& a, int iters, std::uint64_t seed);

// min_s 0.5*||y - A s||^2 + lambda*||s||_1, proximal gradient from s0 = 0.
ReconResult ista(const Eigen::VectorXd& y, const Eigen::MatrixXd& a, const SolverConfig& cfg);

// Same fixed points as ista, Nesterov momentum t_{k+1} = (1+sqrt(1+4 t_k^2))/2.
ReconResult fista(const Eigen::VectorXd& y, const Eigen::MatrixXd& a, const SolverConfig& cfg);

// Greedy selection of `sparsity` atoms by residual correlation, least squares
// on the growing support.
ReconResult omp(const Eigen::VectorXd& y, const Eigen::MatrixXd& a, int sparsity);

// Least squares refit on the detected support {i : |s_i| > threshold}. If the
// support exceeds m entries, the m largest magnitudes are kept so the refit
// stays overdetermined.
Eigen::VectorXd debias_on_support(const Eigen::VectorXd& y, const Eigen::MatrixXd& a,
                                  const Eigen::VectorXd& coeffs, double threshold = 1e-6);

// Per block: A = Phi * Psi^T, solve, x_hat = unvec(Psi^T s), clamp to [0,1].
// ista/fista results are debiased before the inverse transform. Blocks run
// through parallel_for; assembly order is fixed.
Image reconstruct_image(const MeasurementSet& ms, const MeasurementMatrix& phi,
                        const BlockSpec& spec, ReconMethod method, const SolverConfig& cfg,
                        ReconDiagnostics* diagnostics = nullptr);

// 10*log10(peak^2 / MSE); +infinity when the images are identical.
double psnr(const Image& reference, const Image& estimate, double peak = 1.0);

}  // namespace csvqa
