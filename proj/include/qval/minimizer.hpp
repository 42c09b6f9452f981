#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "qval/qfield.hpp"

namespace qval {

struct SolveParams {
  int max_sweeps = 20000;
  double energy_tol = 1e-10;  // relative decrease per full sweep; 0 = run out max_sweeps
  int restarts = 5;           // total runs; the first is unperturbed
  double perturb0 = 0.5;      // noise amplitude as a fraction of local separation
  double anneal = 0.5;
  uint64_t seed = 1;

  void validate() const;
};

struct SweepLogEntry {
  int sweep;
  double energy;
  double max_delta;  // largest node movement this sweep
};

struct MinimizeResult {
  QField field;
  std::vector<SweepLogEntry> log;  // winning run
  double energy = 0.0;
  int winning_restart = 0;
  int total_sweeps = 0;
};

// Discrete Dirichlet energy: sum over forward edges of G(u_i, u_j)^2 h^{n-2}.
double discrete_energy(const QField& u);

// Block-coordinate descent with red-black sweeps.  Each node update matches
// every neighbor tuple to the node tuple by optimal assignment and replaces
// each sheet by the mean of its matched neighbor values, which solves the
// local edge-sum problem exactly for fixed matchings.  Boundary values are
// fixed bitwise.  Among restarts (annealed sheet perturbations near
// low-separation nodes) the lowest-energy result wins.
MinimizeResult minimize(const QField& init, const SolveParams& params = {});

// Checks that init carries the given boundary values on the mask, then solves.
MinimizeResult minimize(const QField& boundary, const QField& init,
                        const SolveParams& params);

void write_sweep_log_csv(const std::vector<SweepLogEntry>& log, std::ostream& out);

// Analytic test fields for the stationarity diagnostics.
struct ScalarTestField {
  std::function<double(std::span<const double>)> value;
  std::function<std::vector<double>(std::span<const double>)> gradient;
};
struct VectorTestField {
  std::function<std::vector<double>(std::span<const double>)> value;
  // jacobian[i*n + j] = D_i zeta^j
  std::function<std::vector<double>(std::span<const double>)> jacobian;
};

// Radial scalar bump (1 - |x|^2/R^2)^3 and the translation-like vector bump
// zeta0 (1 - |x|^2/R^2)^3, both supported in B_R.
ScalarTestField radial_bump_scalar(int n, double radius = 0.9);
VectorTestField translation_bump(std::span<const double> zeta0, double radius = 0.9);

// Squash identity residual: int |Du|^2 zeta + int sum_l u_l . (Du_l . Dzeta);
// near 0 for minimizers.
double squash_residual(const QField& u, const ScalarTestField& zeta);

// First variation of energy under X -> X + t zeta(X):
//   -int sum_ij (1/2 |Du|^2 delta_ij - sum_l D_i u_l . D_j u_l) D_i zeta^j,
// sheets matched by optimal assignment; near 0 for minimizers, and equal to
// the closed-form branch-point defect for the gamma != 0 half-degree cones.
double squeeze_residual(const QField& u, const VectorTestField& zeta);

}  // namespace qval
