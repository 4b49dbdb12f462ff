#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bfvae/association.hpp"
#include "bfvae/gas.hpp"
#include "bfvae/tensor.hpp"
#include "bfvae/vae.hpp"

namespace bfvae::dbsr {

/// Elementwise soft threshold sign(v)·max(|v| − t, 0).
double prox_l1(double v, double t);
Tensor2 prox_l1(const Tensor2& v, double t);

/// Euclidean projection onto {w : ‖w‖₁ ≤ t} (sort-based).
std::vector<double> project_l1_ball(std::span<const double> v, double t);

/// Prox of t·‖·‖∞ via Moreau decomposition: v − Π_{‖·‖₁ ≤ t}(v).
std::vector<double> prox_linf_row(std::span<const double> v, double t);

/// min over D, B (p×K) of (2n)⁻¹‖Mu − X(D + B)‖²_F + λ_D‖D‖₁,₁ + λ_B Σ_rows max_k |B_jk|,
/// with one design matrix shared by all K tasks.
struct DirtyModelProblem {
  Tensor2 x;   // n×p
  Tensor2 mu;  // n×K
  double lambda_d = 0.0;
  double lambda_b = 0.0;

  void validate() const;
};

struct SolverOptions {
  std::size_t max_iters = 10000;
  double tol = 1e-8;  // relative objective change
};

struct DirtySolution {
  Tensor2 d;  // p×K
  Tensor2 b;  // p×K
  std::vector<double> objective_trace;  // initial value, then one entry per iteration
  std::size_t iterations = 0;
  bool converged = false;
};

double dirty_objective(const DirtyModelProblem& problem, const Tensor2& d, const Tensor2& b);

/// Alternating proximal gradient from D = B = 0 with step 1/λ_max(XᵀX/n):
/// a prox-l1 step on D, then a row-wise prox-l∞ step on B. Each step is a
/// majorize-minimize update, so the objective never increases.
DirtySolution dirty_solve(const DirtyModelProblem& problem, const SolverOptions& options = {});

struct DbsrRun {
  AssociationMatrix magnitude;  // |D| as K×p
  AssociationMatrix signed_d;   // D as K×p
  DirtySolution solution;
};

/// Regresses the centered posterior means of `x` on the centered features.
DbsrRun dbsr_run(const vae::VaeModel& model, const Tensor2& x, const std::optional<Tensor2>& condition,
                 double lambda_d, double lambda_b, const SolverOptions& options = {});

struct DbsrAggregate {
  AssociationMatrix magnitude;
  AssociationMatrix signed_d;
  gas::AlignmentMapping mapping;
};

/// GAS-aligns the |D| matrices and averages both |D| and signed D under the
/// same mapping.
DbsrAggregate dbsr_aggregate(std::span<const DbsrRun> runs, double rho, std::uint64_t seed);

}  // namespace bfvae::dbsr
