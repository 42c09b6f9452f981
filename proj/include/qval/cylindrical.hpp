#pragma once

#include <complex>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "qval/aq_point.hpp"

namespace qval {

using Complex = std::complex<double>;
using CoeffVec = std::vector<Complex>;  // c in C^m

// One component of a cylindrical function: either the single-valued zero
// function or the q0-valued branch family Re(c (x1+ix2)^alpha).
struct CylComponent {
  bool zero = false;
  CoeffVec coeff;  // size m when !zero
  int multiplicity = 1;
};

// Homogeneous cylindrical q-valued function
//   phi(X) = sum_j m_j [[ Re(c_j (x1'+ix2')^{k0/q0}) ]],  X' = e^A X,
// with degree alpha = k0/q0 and an optional axis rotation generator A
// (n x n skew, mixing only coordinates {1,2} with {3..n}).
class CylindricalFunction {
 public:
  CylindricalFunction(int q, int m, int k0, int q0,
                      std::vector<CylComponent> components, int n = 2,
                      std::vector<double> rotation = {});

  int q() const { return q_; }
  int m() const { return m_; }
  int k0() const { return k0_; }
  int q0() const { return q0_; }
  int n() const { return n_; }
  double alpha() const { return static_cast<double>(k0_) / q0_; }
  const std::vector<CylComponent>& components() const { return components_; }
  const std::vector<double>& rotation() const { return rotation_; }
  bool has_rotation() const { return has_rotation_; }

  AqPoint eval(std::span<const double> X) const;

  // Model values in fixed slot order (component-major, branch l minor,
  // multiplicity copies innermost), as a flat q*m array.  For each slot the
  // parallel arrays give its component index and branch index (-1 for the
  // zero component).
  void slot_values(double r, double theta, std::vector<double>& out) const;
  const std::vector<int>& slot_component() const { return slot_component_; }
  const std::vector<int>& slot_branch() const { return slot_branch_; }

  // (r, theta) of the rotated first two coordinates; theta in [0, 2pi).
  void polar(std::span<const double> X, double& r, double& theta) const;

  std::string to_record() const;
  static CylindricalFunction from_record(std::istream& in);
  static CylindricalFunction from_record_string(const std::string& text);

 private:
  int q_, m_, k0_, q0_, n_;
  std::vector<CylComponent> components_;
  std::vector<double> rotation_;   // n*n generator, row-major
  std::vector<double> rot_mat_;    // e^A, row-major
  bool has_rotation_ = false;
  std::vector<int> slot_component_;
  std::vector<int> slot_branch_;
};

// Quadrature of G(phi(e^{i theta}), psi(e^{i theta}))^2 over [0, 2pi]
// (uniform trapezoid; spectrally accurate for these integrands).
double circle_distance_sq(const CylindricalFunction& phi,
                          const CylindricalFunction& psi, int n_theta = 1024);

// Relabeling of b by a permutation and branch phases e^{i 2 pi l/q0}
// minimizing sum_j |a_j - e^{i 2 pi l_j/q0} b_{sigma(j)}|^2.  Exhaustive;
// refuses N > 4 or q0 > 4.
struct GaugeResult {
  std::vector<CoeffVec> coeffs;  // relabeled b
  double cost;                   // minimal squared distance
};
GaugeResult canonical_gauge(const std::vector<CoeffVec>& a,
                            const std::vector<CoeffVec>& b, int q0);

// Gauge-invariant distance between coefficient lists.
double gauge_distance_sq(const std::vector<CoeffVec>& a,
                         const std::vector<CoeffVec>& b, int q0);

// Deterministic gauge-canonical representative of a single coefficient list.
std::vector<CoeffVec> canonical_coeffs(const std::vector<CoeffVec>& coeffs,
                                       int q0);

// gamma = c . c (unconjugated); zero iff Re(c), Im(c) orthonormal up to scale.
Complex micallef_white_gamma(const CoeffVec& c);

// First variation of the Dirichlet energy of Re(c z^{1/2}) under the domain
// deformation X -> X + t zeta(X); equals -(pi/2)(Re(gamma) zeta^1(0) -
// Im(gamma) zeta^2(0)).
double inner_variation_residual_closed(const CoeffVec& c,
                                       std::span<const double, 2> zeta0);

// Compactly supported plane vector field given analytically.
struct PlaneVectorField {
  // zeta(x1, x2)
  std::function<std::array<double, 2>(double, double)> value;
  // jacobian [D1 z1, D2 z1, D1 z2, D2 z2]
  std::function<std::array<double, 4>(double, double)> jacobian;
};

// Radial bump zeta(x) = zeta0 (1 - |x|^2/R^2)^3 inside B_R, zero outside.
PlaneVectorField bump_field(std::array<double, 2> zeta0, double radius = 0.9);

struct InnerVariationResult {
  double value = 0.0;     // eps -> 0 extrapolation (fit v0 + a eps^2)
  double spread = 0.0;    // max fit residual across the eps list
  bool converged = true;  // spread within tolerance
  std::vector<double> per_eps;
};

// Quadrature of the first-variation integrand for w = Re(c z^{1/2}) over
// B_1 minus B_eps, extrapolated over the eps list.
InnerVariationResult inner_variation_residual_numeric(
    const CoeffVec& c, const PlaneVectorField& zeta, std::vector<double> eps,
    int n_r = 2048, int n_theta = 1024, double spread_tol = 0.05);

// The q complex q-th roots of (x1+ix2)^q - 1/k as an AqPoint in R^2.
// Branch points exactly where (x1+ix2)^q = 1/k.
std::function<AqPoint(std::span<const double>)> example_uk(int q, double k);

}  // namespace qval
