// scratch probe, not part of the suite
#include <cmath>
#include <cstdio>
#include <numbers>

#include "qval/cylindrical.hpp"
#include "qval/frequency.hpp"
#include "qval/qfield.hpp"

using namespace qval;

int main() {
  constexpr double kPi = std::numbers::pi;
  CylindricalFunction phi(2, 2, 1, 2,
                          {CylComponent{false, {Complex(1, 0), Complex(0, 1)}, 1}});
  for (int nodes : {513, 1025}) {
    QField u = sample_field([&](std::span<const double> X) { return phi.eval(X); },
                            GridSpec::centered_box(2, nodes), 2, 2);
    printf("h = %g\n", u.grid().h);
    for (double rho : {0.1, 0.2, 0.3, 0.5}) {
      double D = D_of(u, {0, 0, 0}, rho);
      double H = H_of(u, {0, 0, 0}, rho);
      double Dexact = 2 * kPi * rho, Hexact = 4 * kPi * rho;
      printf("  rho %.2f: D err %+.5f (rel %+.4f)  H err %+.5f (rel %+.4f)  W %+.5f\n",
             rho, D - Dexact, D / Dexact - 1, H - Hexact, H / Hexact - 1,
             std::pow(rho, -1.0) * (D - 0.5 * H));
    }
  }
  return 0;
}
