#include "bfvae/dbsr.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <Eigen/Eigenvalues>

#include "bfvae/error.hpp"

namespace bfvae::dbsr {

double prox_l1(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

Tensor2 prox_l1(const Tensor2& v, double t) {
  if (!(t >= 0.0)) throw ConfigError("prox_l1: threshold must be non-negative");
  Tensor2 out(v.rows(), v.cols());
  for (std::size_t i = 0; i < v.size(); ++i) out.data()[i] = prox_l1(v.data()[i], t);
  return out;
}

std::vector<double> project_l1_ball(std::span<const double> v, double t) {
  if (!(t >= 0.0)) throw ConfigError("project_l1_ball: radius must be non-negative");
  std::vector<double> out(v.begin(), v.end());
  double norm = 0.0;
  for (double x : v) norm += std::abs(x);
  if (norm <= t) return out;
  if (t == 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return out;
  }
  std::vector<double> u(v.size());
  std::transform(v.begin(), v.end(), u.begin(), [](double x) { return std::abs(x); });
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (std::size_t r = 0; r < u.size(); ++r) {
    cumsum += u[r];
    const double candidate = (cumsum - t) / static_cast<double>(r + 1);
    if (u[r] - candidate > 0.0) theta = candidate;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = std::max(std::abs(v[i]) - theta, 0.0);
    out[i] = v[i] < 0.0 ? -m : m;
  }
  return out;
}

std::vector<double> prox_linf_row(std::span<const double> v, double t) {
  const auto proj = project_l1_ball(v, t);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - proj[i];
  return out;
}

void DirtyModelProblem::validate() const {
  if (x.rows() != mu.rows()) throw DimensionError("dirty model: X and Mu have different row counts");
  if (x.rows() == 0) throw ConfigError("dirty model: no observations");
  if (!(lambda_d >= 0.0) || !(lambda_b >= 0.0)) throw ConfigError("dirty model: lambdas must be non-negative");
  if (!x.all_finite() || !mu.all_finite()) throw ConfigError("dirty model: inputs must be finite");
}

double dirty_objective(const DirtyModelProblem& problem, const Tensor2& d, const Tensor2& b) {
  const double n = static_cast<double>(problem.x.rows());
  const RowMajorMatrix resid = problem.mu.eigen() - problem.x.eigen() * (d.eigen() + b.eigen());
  double penalty_b = 0.0;
  for (std::size_t j = 0; j < b.rows(); ++j) {
    double m = 0.0;
    for (double v : b.row(j)) m = std::max(m, std::abs(v));
    penalty_b += m;
  }
  return resid.squaredNorm() / (2.0 * n) + problem.lambda_d * d.eigen().cwiseAbs().sum() + problem.lambda_b * penalty_b;
}

DirtySolution dirty_solve(const DirtyModelProblem& problem, const SolverOptions& options) {
  problem.validate();
  const std::size_t p = problem.x.cols();
  const std::size_t k = problem.mu.cols();
  const double n = static_cast<double>(problem.x.rows());

  const Eigen::MatrixXd gram = problem.x.eigen().transpose() * problem.x.eigen() / n;
  const Eigen::MatrixXd xty = problem.x.eigen().transpose() * problem.mu.eigen() / n;
  const double lipschitz = p == 0 ? 0.0 : Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram).eigenvalues().maxCoeff();

  DirtySolution s;
  s.d = Tensor2(p, k);
  s.b = Tensor2(p, k);
  s.objective_trace.push_back(dirty_objective(problem, s.d, s.b));
  if (!(lipschitz > 0.0)) {
    s.converged = true;
    return s;
  }
  const double eta = 1.0 / lipschitz;

  auto gradient = [&](const Tensor2& d, const Tensor2& b) {
    // ∇ = −(1/n)Xᵀ(Mu − X W) = gram·W − XᵀMu/n
    Eigen::MatrixXd w = d.eigen() + b.eigen();
    Eigen::MatrixXd g = gram * w - xty;
    return g;
  };

  for (std::size_t it = 0; it < options.max_iters; ++it) {
    Eigen::MatrixXd g = gradient(s.d, s.b);
    Tensor2 step_d(p, k);
    step_d.eigen() = s.d.eigen() - eta * g;
    s.d = prox_l1(step_d, eta * problem.lambda_d);

    g = gradient(s.d, s.b);
    Tensor2 step_b(p, k);
    step_b.eigen() = s.b.eigen() - eta * g;
    for (std::size_t j = 0; j < p; ++j) {
      const auto row = prox_linf_row(step_b.row(j), eta * problem.lambda_b);
      std::copy(row.begin(), row.end(), s.b.row(j).begin());
    }

    const double f = dirty_objective(problem, s.d, s.b);
    if (!std::isfinite(f)) throw DivergenceError("dirty model solver: non-finite objective at iteration " + std::to_string(it));
    const double prev = s.objective_trace.back();
    s.objective_trace.push_back(f);
    s.iterations = it + 1;
    if (std::abs(prev - f) <= options.tol * std::max(std::abs(prev), 1e-300)) {
      s.converged = true;
      break;
    }
  }
  return s;
}

namespace {

Tensor2 centered(const Tensor2& m) {
  Tensor2 out = m;
  if (m.rows() == 0) return out;
  const Eigen::RowVectorXd mean = m.eigen().colwise().mean();
  out.eigen().rowwise() -= mean;
  return out;
}

}  // namespace

DbsrRun dbsr_run(const vae::VaeModel& model, const Tensor2& x, const std::optional<Tensor2>& condition,
                 double lambda_d, double lambda_b, const SolverOptions& options) {
  const auto stats = vae::posterior_stats(model, x, model.conditional ? condition : std::nullopt);
  DirtyModelProblem problem{centered(x), centered(stats.mu), lambda_d, lambda_b};
  DbsrRun run;
  run.solution = dirty_solve(problem, options);
  const Tensor2 dt = run.solution.d.transposed();

  run.signed_d.kind = AssociationKind::DbsrSigned;
  run.signed_d.values = dt;
  run.signed_d.mean_kl = stats.mean_kl();
  if (model.latent_dim >= 2) run.signed_d.informative = gas::split_informative(run.signed_d.mean_kl).informative;

  run.magnitude = run.signed_d;
  run.magnitude.kind = AssociationKind::DbsrMagnitude;
  for (double& v : run.magnitude.values.data()) v = std::abs(v);
  return run;
}

DbsrAggregate dbsr_aggregate(std::span<const DbsrRun> runs, double rho, std::uint64_t seed) {
  std::vector<AssociationMatrix> mags, signs;
  for (const auto& r : runs) {
    mags.push_back(r.magnitude);
    signs.push_back(r.signed_d);
  }
  DbsrAggregate out;
  out.mapping = gas::greedy_align(mags, rho, seed);
  out.magnitude = gas::aggregate_aligned(mags, out.mapping);
  out.signed_d = gas::aggregate_aligned(signs, out.mapping);
  return out;
}

}  // namespace bfvae::dbsr
