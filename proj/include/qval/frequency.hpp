#pragma once

#include <array>
#include <iosfwd>
#include <vector>

#include "qval/qfield.hpp"

namespace qval {

// Per-radius table of the frequency quantities about one center:
//   D(rho) = rho^{2-n} int_{B_rho} |Du|^2,
//   H(rho) = rho^{1-n} int_{dB_rho} |u|^2,
//   N = D/H,   W(rho) = rho^{-2 alpha} (D - alpha H).
struct FrequencyProfile {
  std::array<double, 3> center = {0.0, 0.0, 0.0};
  double alpha = 0.0;  // degree used for W
  std::vector<double> radii;
  std::vector<double> D, H, N, W;
};

struct FrequencyOptions {
  ShellOptions shell;
  // H is reported only above this floor times (sup |u|)^2.
  double h_floor = 1e-14;
};

double D_of(const QField& u, const std::array<double, 3>& center, double rho);
double H_of(const QField& u, const std::array<double, 3>& center, double rho,
            const FrequencyOptions& opts = {});
double N_of(const QField& u, const std::array<double, 3>& center, double rho,
            const FrequencyOptions& opts = {});

// The volume form of H: n rho^{-n} int_{B_rho} |u|^2
//   + 2 rho^{-n} int_{B_rho} |Du|^2 (rho^2 - R^2)/2.
// Independent route for cross-checking H_of.
double H_of_volume(const QField& u, const std::array<double, 3>& center,
                   double rho);

double weiss(const QField& u, const std::array<double, 3>& center, double rho,
             double alpha, const FrequencyOptions& opts = {});

FrequencyProfile profile(const QField& u, const std::array<double, 3>& center,
                         const std::vector<double>& radii, double alpha,
                         const FrequencyOptions& opts = {});

struct MonotoneViolation {
  char quantity;  // 'N' or 'W'
  int index;      // violation between radii[index] and radii[index+1]
  double drop;
};

// Adjacent-pair decreases of N or W beyond tol.  Informational for fields
// that are not minimizers.
std::vector<MonotoneViolation> check_monotone(const FrequencyProfile& p,
                                              double tol);

// int over the annulus of R^{2-n} |d(u/R^alpha)/dR|^2, radial derivatives per
// matched sheet along shell rays.
double radial_excess_energy(const QField& u, const std::array<double, 3>& center,
                            double alpha, double rho1, double rho2,
                            const FrequencyOptions& opts = {});

// CSV: rho,D,H,N,W
void write_profile_csv(const FrequencyProfile& p, std::ostream& out);

}  // namespace qval
