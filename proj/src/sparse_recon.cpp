#include "csvqa/sparse_recon.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "csvqa/parallel.hpp"
#include "csvqa/rng.hpp"
#include "csvqa/transforms.hpp"

namespace csvqa {

std::string to_string(ReconMethod m) {
  switch (m) {
    case ReconMethod::ista: return "ista";
    case ReconMethod::fista: return "fista";
    case ReconMethod::omp: return "omp";
  }
  return "?";
}

ReconMethod recon_method_from_string(const std::string& s) {
  if (s == "ista") return ReconMethod::ista;
  if (s == "fista") return ReconMethod::fista;
  if (s == "omp") return ReconMethod::omp;
  throw_error(Error::Kind::invalid_argument, "unknown reconstruction method: " + s);
}

double soft_threshold(double v, double tau) {
  if (v > tau) return v - tau;
  if (v < -tau) return v + tau;
  return 0.0;
}

double power_iteration_lipschitz(const Eigen::MatrixXd& a, int iters, std::uint64_t seed) {
  require(iters >= 10, Error::Kind::invalid_argument, "power iteration needs iters >= 10");
  const Eigen::Index n = a.cols();
  Rng rng = Rng(seed).split("power-iteration");
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.next_gaussian();
  double norm = v.norm();
  require(norm > 0, Error::Kind::invalid_argument, "power iteration start vector is zero");
  v /= norm;

  double eig = 0.0;
  for (int it = 0; it < iters; ++it) {
    Eigen::VectorXd w = a.transpose() * (a * v);
    const double wn = w.norm();
    if (wn == 0.0) {
      throw_error(Error::Kind::ill_conditioned,
                  "power iteration: A^T A annihilated the iterate (zero operator?)");
    }
    eig = v.dot(w);
    v = w / wn;
  }
  return 1.05 * eig;
}

namespace {

double objective_value(const Eigen::VectorXd& y, const Eigen::MatrixXd& a,
                       const Eigen::VectorXd& s, double lambda) {
  const double resid = (y - a * s).squaredNorm();
  return 0.5 * resid + lambda * s.lpNorm<1>();
}

double resolve_step(const Eigen::MatrixXd& a, const SolverConfig& cfg) {
  if (cfg.step_mode == StepMode::fixed) {
    require(cfg.fixed_step > 0.0, Error::Kind::invalid_argument,
            "fixed step mode requires fixed_step > 0");
    return cfg.fixed_step;
  }
  const double lip = power_iteration_lipschitz(a, 100, cfg.seed);
  require(lip > 0.0, Error::Kind::ill_conditioned, "Lipschitz estimate is zero");
  return 1.0 / lip;
}

// Windowed stop: converged once the relative objective change stays below
// tolerance for 5 consecutive iterations (momentum ripple in fista would trip
// a single-step test).
class ConvergenceWindow {
 public:
  explicit ConvergenceWindow(double tolerance) : tolerance_(tolerance) {}

  bool update(double prev, double curr) {
    const double denom = std::max(std::abs(prev), 1e-300);
    if (std::abs(prev - curr) / denom < tolerance_) {
      ++streak_;
    } else {
      streak_ = 0;
    }
    return streak_ >= 5;
  }

 private:
  double tolerance_;
  int streak_ = 0;
};

ReconResult proximal_gradient(const Eigen::VectorXd& y, const Eigen::MatrixXd& a,
                              const SolverConfig& cfg, bool accelerated) {
  require(a.rows() == y.size(), Error::Kind::invalid_dimensions,
          "solver: y length must match A rows");
  require(cfg.lambda >= 0.0, Error::Kind::invalid_argument,
          "solver: lambda must be >= 0 (negative means unresolved default)");
  require(cfg.max_iters >= 1 && cfg.tolerance >= 0.0, Error::Kind::invalid_argument,
          "solver: max_iters >= 1 and tolerance >= 0 required");

  const double step = resolve_step(a, cfg);
  const double thresh = cfg.lambda * step;
  const Eigen::Index n = a.cols();

  ReconResult res;
  Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd s_prev = s;
  Eigen::VectorXd z = s;  // extrapolation point (== s for ista)
  double t = 1.0;
  double obj = objective_value(y, a, s, cfg.lambda);
  ConvergenceWindow window(cfg.tolerance);
  if (cfg.record_trace) res.objective_trace.push_back(obj);

  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    const Eigen::VectorXd& base = accelerated ? z : s;
    Eigen::VectorXd grad_point = base + step * (a.transpose() * (y - a * base));
    Eigen::VectorXd s_next(n);
    for (Eigen::Index i = 0; i < n; ++i) s_next[i] = soft_threshold(grad_point[i], thresh);

    if (accelerated) {
      const double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
      z = s_next + ((t - 1.0) / t_next) * (s_next - s);
      t = t_next;
    }
    s_prev = s;
    s = s_next;

    const double obj_next = objective_value(y, a, s, cfg.lambda);
    if (!std::isfinite(obj_next)) {
      throw_error(Error::Kind::divergence,
                  "solver diverged at iteration " + std::to_string(it + 1) +
                      " (non-finite objective; check step size)");
    }
    if (cfg.record_trace) res.objective_trace.push_back(obj_next);
    const bool done = window.update(obj, obj_next);
    obj = obj_next;
    if (done) {
      res.converged = true;
      ++it;
      break;
    }
  }

  res.coefficients = std::move(s);
  res.iterations_used = std::min(it, cfg.max_iters);
  res.final_objective = obj;
  return res;
}

}  // namespace

ReconResult ista(const Eigen::VectorXd& y, const Eigen::MatrixXd& a, const SolverConfig& cfg) {
  return proximal_gradient(y, a, cfg, false);
}

ReconResult fista(const Eigen::VectorXd& y, const Eigen::MatrixXd& a, const SolverConfig& cfg) {
  return proximal_gradient(y, a, cfg, true);
}

ReconResult omp(const Eigen::VectorXd& y, const Eigen::MatrixXd& a, int sparsity) {
  const Eigen::Index m = a.rows();
  const Eigen::Index n = a.cols();
  require(a.rows() == y.size(), Error::Kind::invalid_dimensions, "omp: y length must match A rows");
  require(sparsity >= 1 && sparsity <= m, Error::Kind::invalid_argument,
          "omp: need 1 <= sparsity <= m");
  for (Eigen::Index j = 0; j < n; ++j)
    require(a.col(j).norm() > 0.0, Error::Kind::invalid_argument,
            "omp: column " + std::to_string(j) + " of A is zero");

  std::vector<Eigen::Index> support;
  std::vector<char> used(static_cast<std::size_t>(n), 0);
  Eigen::VectorXd residual = y;
  Eigen::VectorXd sol;

  for (int k = 0; k < sparsity; ++k) {
    Eigen::Index best = -1;
    double best_corr = -1.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      const double corr = std::abs(a.col(j).dot(residual));
      if (corr > best_corr) {
        best_corr = corr;
        best = j;
      }
    }
    support.push_back(best);
    used[static_cast<std::size_t>(best)] = 1;

    Eigen::MatrixXd sub(m, static_cast<Eigen::Index>(support.size()));
    for (std::size_t c = 0; c < support.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = a.col(support[c]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
    if (qr.rank() < static_cast<Eigen::Index>(support.size())) {
      throw_error(Error::Kind::ill_conditioned,
                  "omp: support system became singular after selecting atom " +
                      std::to_string(best));
    }
    sol = qr.solve(y);
    residual = y - sub * sol;
  }

  ReconResult res;
  res.coefficients = Eigen::VectorXd::Zero(n);
  for (std::size_t c = 0; c < support.size(); ++c) res.coefficients[support[c]] = sol[static_cast<Eigen::Index>(c)];
  res.iterations_used = sparsity;
  res.final_objective = 0.5 * residual.squaredNorm();
  res.converged = true;
  return res;
}

Eigen::VectorXd debias_on_support(const Eigen::VectorXd& y, const Eigen::MatrixXd& a,
                                  const Eigen::VectorXd& coeffs, double threshold) {
  const Eigen::Index m = a.rows();
  std::vector<Eigen::Index> support;
  for (Eigen::Index i = 0; i < coeffs.size(); ++i)
    if (std::abs(coeffs[i]) > threshold) support.push_back(i);
  if (support.empty()) return Eigen::VectorXd::Zero(coeffs.size());
  if (static_cast<Eigen::Index>(support.size()) > m) {
    std::sort(support.begin(), support.end(), [&](Eigen::Index l, Eigen::Index r) {
      return std::abs(coeffs[l]) > std::abs(coeffs[r]);
    });
    support.resize(static_cast<std::size_t>(m));
    std::sort(support.begin(), support.end());
  }
  Eigen::MatrixXd sub(m, static_cast<Eigen::Index>(support.size()));
  for (std::size_t c = 0; c < support.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = a.col(support[c]);
  Eigen::VectorXd sol = Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(sub).solve(y);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(coeffs.size());
  for (std::size_t c = 0; c < support.size(); ++c) out[support[c]] = sol[static_cast<Eigen::Index>(c)];
  return out;
}

Image reconstruct_image(const MeasurementSet& ms, const MeasurementMatrix& phi,
                        const BlockSpec& spec, ReconMethod method, const SolverConfig& cfg,
                        ReconDiagnostics* diagnostics) {
  spec.validate();
  require(ms.m == phi.rows && phi.cols == spec.pixels_per_block() &&
              ms.channels == spec.channels && ms.block_grid_rows == spec.block_rows() &&
              ms.block_grid_cols == spec.block_cols(),
          Error::Kind::invalid_dimensions, "reconstruct_image: inconsistent dimensions");

  const int n = phi.cols;
  const int m = phi.rows;
  const Basis basis = Basis::make(spec.block_size);
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      phi_mat(phi.entries.data(), m, n);
  const Eigen::MatrixXd a = phi_mat * basis.psi.transpose();

  // The Lipschitz step depends only on A; resolve it once and reuse across
  // blocks through fixed-step mode.
  SolverConfig block_cfg = cfg;
  if ((method == ReconMethod::ista || method == ReconMethod::fista) &&
      cfg.step_mode == StepMode::lipschitz_power_iteration) {
    block_cfg.step_mode = StepMode::fixed;
    block_cfg.fixed_step = 1.0 / power_iteration_lipschitz(a, 100, cfg.seed);
  }
  const int sparsity = cfg.omp_sparsity > 0 ? cfg.omp_sparsity : std::max(1, m / 4);
  require(sparsity <= m, Error::Kind::invalid_argument,
          "reconstruct_image: omp_sparsity must be <= m");

  const int total = ms.vector_count();
  Image out(spec.channels, spec.image_height, spec.image_width);
  std::vector<BlockDiagnostics> diag(static_cast<std::size_t>(total));
  const int b = spec.block_size;
  const int grid_cols = ms.block_grid_cols;
  const int grid_rows = ms.block_grid_rows;

  parallel_for(static_cast<std::size_t>(total), [&](std::size_t idx) {
    const int c = static_cast<int>(idx) / (grid_rows * grid_cols);
    const int rem = static_cast<int>(idx) % (grid_rows * grid_cols);
    const int by = rem / grid_cols;
    const int bx = rem % grid_cols;
    const auto yspan = ms.vec(c, by, bx);
    Eigen::Map<const Eigen::VectorXd> y(yspan.data(), m);

    ReconResult res;
    try {
      if (method == ReconMethod::omp) {
        res = omp(y, a, sparsity);
      } else {
        SolverConfig local = block_cfg;
        if (local.lambda < 0.0) {
          const double corr_inf = (a.transpose() * y).lpNorm<Eigen::Infinity>();
          local.lambda = 0.01 * (1.0 - static_cast<double>(m) / n) * corr_inf;
        }
        res = method == ReconMethod::ista ? ista(y, a, local) : fista(y, a, local);
        res.coefficients = debias_on_support(y, a, res.coefficients);
      }
    } catch (const Error& e) {
      throw Error(e.kind(), "block (" + std::to_string(c) + "," + std::to_string(by) + "," +
                                std::to_string(bx) + "): " + e.what());
    }
    Eigen::VectorXd xhat = basis.psi.transpose() * res.coefficients;
    for (int py = 0; py < b; ++py)
      for (int px = 0; px < b; ++px) {
        out.at(c, by * b + py, bx * b + px) = std::clamp(xhat[py * b + px], 0.0, 1.0);
      }
    diag[idx] = BlockDiagnostics{res.iterations_used, res.final_objective, res.converged};
  });

  if (diagnostics) diagnostics->blocks = std::move(diag);
  return out;
}

double psnr(const Image& reference, const Image& estimate, double peak) {
  require(reference.same_shape(estimate), Error::Kind::invalid_dimensions,
          "psnr: shape mismatch");
  require(peak > 0.0, Error::Kind::invalid_argument, "psnr: peak must be > 0");
  double sq = 0.0;
  for (std::size_t i = 0; i < reference.data.size(); ++i) {
    const double d = reference.data[i] - estimate.data[i];
    sq += d * d;
  }
  const double mse = sq / static_cast<double>(reference.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

}  // namespace csvqa
