#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qval/cylindrical.hpp"
#include "qval/qfield.hpp"

namespace qval {

// u_{Y,rho}(X) = u(Y + rho X) / (rho^{-n/2} ||u||_{L2(B_rho(Y))}), resampled
// on a fresh grid over [-1,1]^n (matched-sheet interpolation).
// nodes_per_axis = 0 keeps the source resolution per unit length, capped.
QField rescale(const QField& u, const std::array<double, 3>& center, double rho,
               int nodes_per_axis = 0);

// sqrt of the L2(B_1) distance between u (on a B_1 grid) and the sampled phi.
double excess(const QField& u, const CylindricalFunction& phi);

// Candidate tangent shape: nonzero components (unknown coefficients) with
// multiplicities, plus q - q0 * sum(mult) copies of [[0]].
struct TangentStructure {
  int k0 = 1;
  int q0 = 1;
  std::vector<int> multiplicities;  // one per nonzero component
  int zero_multiplicity = 0;

  int nonzero_count() const { return static_cast<int>(multiplicities.size()); }
};

// All structures with p <= ceil(q/q0) nonzero components consistent with q.
// Exhaustive; bounded by q <= 6, q0 <= 3.
std::vector<TangentStructure> enumerate_structures(int q, int k0, int q0);

struct FitOptions {
  int max_alternations = 80;
  int random_inits = 8;
  uint64_t seed = 2024;
  double ball_radius = 1.0;
  std::optional<std::vector<CoeffVec>> init_coeffs;  // one per nonzero component
};

struct FitResult {
  CylindricalFunction tangent;
  std::vector<CoeffVec> coeffs;  // canonical gauge, one per nonzero component
  TangentStructure structure;
  double excess = 0.0;
  bool converged = true;  // alternation reached a matching fixed point
};

// Least-squares projection onto the cylindrical family: alternates optimal
// matching of node values to component branches with exact linear least
// squares for the coefficients (the model is linear in Re c, Im c for a
// fixed matching).
FitResult fit_tangent(const QField& u, const TangentStructure& structure,
                      const FitOptions& opts = {});
// Enumerates admissible structures for the given degree and returns the
// lowest-excess fit.
FitResult fit_tangent(const QField& u, int k0, int q0, const FitOptions& opts = {});

// Sheet decomposition of u over the branches of phi on the annulus
// {tau <= r(X) <= r_outer}: every value of u(X) is assigned to the nearest
// branch of a component of phi.  Requires pointwise
// sep phi(X) > kappa * 2 * G(u(X), phi(X)).
struct SheetDecomposition {
  CylindricalFunction phi;
  double tau = 0.0, r_outer = 0.0;
  std::vector<int64_t> nodes;          // annulus nodes of u's grid
  std::vector<double> assigned;        // per node: q*m values in phi slot order
  int q = 0, m = 0;

  // offset of slot s at list position t: assigned value minus branch value
  std::vector<double> offset(size_t t, int slot,
                             const std::array<double, 3>& pos) const;
};

SheetDecomposition decompose_sheets(const QField& u, const CylindricalFunction& phi,
                                    double tau, double r_outer, double kappa = 2.0);

// u rebuilt from the decomposition (bitwise equal to the input field).
QField reassemble(const QField& u, const SheetDecomposition& dec);

// Averaged sheet offsets for the tilt extraction: out gets one R^m vector per
// (nonzero component, branch) group, component-major, branch-minor.
using OffsetGroupFn =
    std::function<void(std::span<const double> X, std::vector<double>& out)>;

// Matched-interpolation offsets of a grid field over phi0.
OffsetGroupFn field_offsets(const QField& u, const CylindricalFunction& phi0);

struct TiltOptions {
  double r_min = 0.3, r_max = 0.7;  // r-window averaged over
  int n_r = 12;
  int n_theta = 512;
};

struct TiltResult {
  std::vector<double> slices;                 // z per slice (n = 2: single 0)
  std::vector<std::array<double, 2>> lambda;  // per slice
  std::vector<double> tilt;                   // 2 x (n-2) matrix A, row-major
};

// Fourier extraction of the axis tilt: per slice z computes
//   w~_j(r,z) = (pi q0)^{-1} int sum_l r^{1-alpha} w_avg . D_i phi_{j,l}(e^{i theta}),
// forms W = sum_j m_j w~_j, divides by c = sum alpha^2 m_j |c_j|^2 and fits
// lambda(z) = A z by least squares.
TiltResult fourier_tilt(const CylindricalFunction& phi0, const OffsetGroupFn& w,
                        const std::vector<double>& slices,
                        const TiltOptions& opts = {});

struct ScaleEntry {
  double scale = 1.0;        // theta^j
  double excess_hat = 0.0;   // (rho^{-n-2 alpha} int_{B_rho} G(u, Phi)^2)^{1/2}
  std::vector<CoeffVec> coeffs;  // canonical gauge, original-field normalization
  bool exact = false;        // excess at the numerically-exact floor
};

struct ExcessReport {
  std::array<double, 3> center = {0.0, 0.0, 0.0};
  double theta = 0.5;
  double alpha = 0.5;
  std::vector<ScaleEntry> scales;
  bool mu_defined = false;
  double mu_fit = 0.0;
  double fit_residual = 0.0;
  double coeff_drift_finest = 0.0;
  std::string status = "ok";
};

struct DecayOptions {
  FitOptions fit;
  int rescale_nodes = 129;
  double exact_floor = 1e-10;
};

ExcessReport decay_report(const QField& u, const std::array<double, 3>& center,
                          double theta, int levels, const TangentStructure& structure,
                          const DecayOptions& opts = {});

// Weighted-excess diagnostics.
// int_{B_gamma, R > r_min} R^{-n-2 alpha + sigma} G(u, phi)^2.
double weighted_excess_radial(const QField& u, const QField& phi_sampled,
                              const std::array<double, 3>& center, double alpha,
                              double sigma, double gamma, double r_min);
// int_{B_1/2} G(u, phi)^2 / r_delta^{2/q - sigma},  r_delta = max(r, delta).
double weighted_excess_axis(const QField& u, const QField& phi_sampled,
                            double delta, double sigma);

void write_excess_report(const ExcessReport& rep, std::ostream& out);
void write_excess_csv(const ExcessReport& rep, std::ostream& out);

}  // namespace qval
