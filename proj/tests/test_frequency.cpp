#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "qval/cylindrical.hpp"
#include "qval/frequency.hpp"
#include "qval/qfield.hpp"

using namespace qval;

namespace {

constexpr double kPi = std::numbers::pi;
const std::array<double, 3> kOrigin = {0.0, 0.0, 0.0};

QField sampled_cone(int k0, int q0, int nodes) {
  CylindricalFunction phi(q0, 2, k0, q0,
                          {CylComponent{false, {Complex(1, 0), Complex(0, 1)}, 1}});
  return sample_field([phi](std::span<const double> X) { return phi.eval(X); },
                      GridSpec::centered_box(2, nodes), q0, 2);
}

QField linear_field(int nodes) {
  return sample_field(
      [](std::span<const double> X) {
        return AqPoint(1, 1, {X[0]});
      },
      GridSpec::centered_box(2, nodes), 1, 1);
}

}  // namespace

TEST_CASE("linear harmonic has frequency one and Weiss pi rho / 2") {
  QField u = linear_field(257);
  for (double rho : {0.2, 0.4, 0.6}) {
    CHECK(N_of(u, kOrigin, rho) == doctest::Approx(1.0).epsilon(0.02));
    // D = H = pi rho^2, so W(rho, 1/2) = rho^{-1} (D - H/2) = pi rho / 2
    CHECK(weiss(u, kOrigin, rho, 0.5) == doctest::Approx(kPi * rho / 2).epsilon(0.02));
  }
  // W at alpha = 1/2 is positive and increasing in rho
  double w1 = weiss(u, kOrigin, 0.2, 0.5);
  double w2 = weiss(u, kOrigin, 0.4, 0.5);
  CHECK(w1 > 0.0);
  CHECK(w2 > w1);
}

TEST_CASE("half-degree cone has frequency 1/2 and vanishing Weiss") {
  QField u = sampled_cone(1, 2, 513);
  for (double rho : {0.15, 0.3, 0.5}) {
    CHECK(N_of(u, kOrigin, rho) == doctest::Approx(0.5).epsilon(0.04));
    double H = H_of(u, kOrigin, rho);
    CHECK(std::abs(weiss(u, kOrigin, rho, 0.5)) <= 0.02 * std::max(1.0, H));
  }
}

TEST_CASE("homogeneous degree alpha about the center has N = alpha") {
  for (auto [k0, q0] : std::vector<std::pair<int, int>>{{3, 2}, {2, 3}}) {
    QField u = sampled_cone(k0, q0, 513);
    const double alpha = static_cast<double>(k0) / q0;
    for (double rho : {0.2, 0.45})
      CHECK(N_of(u, kOrigin, rho) == doctest::Approx(alpha).epsilon(0.04));
  }
}

TEST_CASE("N is invariant under scaling the field") {
  QField u = sampled_cone(1, 2, 257);
  QField su = u;
  for (double& x : su.raw()) x *= 7.5;
  CHECK(N_of(su, kOrigin, 0.4) == doctest::Approx(N_of(u, kOrigin, 0.4)).epsilon(1e-9));
}

TEST_CASE("zero boundary trace errors") {
  QField zero(GridSpec::centered_box(2, 65), 2, 2);
  CHECK_THROWS(N_of(zero, kOrigin, 0.5));
}

TEST_CASE("profile, monotonicity check and doubling") {
  QField u = sampled_cone(1, 2, 513);
  std::vector<double> radii;
  for (double rho = 0.1; rho <= 0.52; rho += 0.05) radii.push_back(rho);
  FrequencyProfile p = profile(u, kOrigin, radii, 0.5);
  CHECK(check_monotone(p, 0.01).empty());

  // doubling: H(sigma) = (sigma/rho)^{2 alpha} H(rho) for the homogeneous cone
  double Hs = H_of(u, kOrigin, 0.2), Hr = H_of(u, kOrigin, 0.4);
  CHECK(Hs <= std::pow(0.5, 2 * N_of(u, kOrigin, 0.1)) * Hr * 1.05);
  CHECK(Hs == doctest::Approx(std::pow(0.5, 2 * 0.5) * Hr).epsilon(0.05));

  // a non-harmonic single-valued field may violate monotonicity; the check
  // reports rather than throws
  QField bad = sample_field(
      [](std::span<const double> X) {
        return AqPoint(1, 1, {std::sin(3.0 * X[0]) * std::sin(3.0 * X[1])});
      },
      GridSpec::centered_box(2, 257), 1, 1);
  FrequencyProfile pb = profile(bad, kOrigin, radii, 0.5);
  CHECK_NOTHROW(check_monotone(pb, 0.01));

  std::ostringstream csv;
  write_profile_csv(p, csv);
  CHECK(csv.str().starts_with("rho,D,H,N,W\n"));
}

TEST_CASE("H shell route agrees with the volume route") {
  QField cone = sampled_cone(1, 2, 513);
  QField lin = linear_field(257);
  for (double rho : {0.3, 0.5}) {
    CHECK(H_of(cone, kOrigin, rho) ==
          doctest::Approx(H_of_volume(cone, kOrigin, rho)).epsilon(0.01));
    CHECK(H_of(lin, kOrigin, rho) ==
          doctest::Approx(H_of_volume(lin, kOrigin, rho)).epsilon(0.01));
  }
}

TEST_CASE("variational identities (4.5) and (4.6) on analytic sheets") {
  QField u = sampled_cone(1, 2, 513);
  const double rho = 0.4;
  // int_{B_rho} |Du|^2 = int_{dB_rho} u . D_R u
  double lhs = energy_in_ball(u, BallSpec{kOrigin, rho});
  double rhs = shell_integral(u, BallSpec{kOrigin, rho}, ShellIntegrand::kURadialDeriv);
  CHECK(std::abs(lhs - rhs) / lhs <= 0.05);

  // d/drho (rho^{2-n} int_{B_rho} |Du|^2) = 2 rho^{2-n} int_{dB_rho} |D_R u|^2
  const double d = 0.02;
  double deriv = (D_of(u, kOrigin, rho + d) - D_of(u, kOrigin, rho - d)) / (2 * d);
  double target =
      2.0 * shell_integral(u, BallSpec{kOrigin, rho}, ShellIntegrand::kRadialDerivSq);
  CHECK(deriv == doctest::Approx(target).epsilon(0.05));
}

TEST_CASE("radial excess energy") {
  // homogeneous cone: u / R^alpha is radially constant
  QField cone = sampled_cone(1, 2, 513);
  double base = radial_excess_energy(cone, kOrigin, 0.5, 0.2, 0.6);
  CHECK(base <= 1e-3);

  // two-term field: closed form pi |d|^2 (rho2^2 - rho1^2) for the z^{3/2} part
  const CoeffVec c = {Complex(1, 0), Complex(0, 1)};
  const CoeffVec d = {Complex(0.5, 0), Complex(0, -0.5)};
  auto two_term = [&](std::span<const double> X) {
    const Complex z(X[0], X[1]);
    const double r = std::abs(z);
    double th = std::arg(z);
    if (th < 0) th += 2 * kPi;
    std::vector<double> flat(4);
    for (int l = 0; l < 2; ++l) {
      const Complex w1 = std::polar(std::sqrt(r), 0.5 * (th + 2 * kPi * l));
      const Complex w3 = std::polar(std::pow(r, 1.5), 1.5 * (th + 2 * kPi * l));
      for (int k = 0; k < 2; ++k)
        flat[l * 2 + k] = (c[k] * w1).real() + (d[k] * w3).real();
    }
    return AqPoint(2, 2, std::move(flat));
  };
  QField u2 = sample_field(two_term, GridSpec::centered_box(2, 513), 2, 2);
  double dd = 0.0;
  for (const auto& x : d) dd += std::norm(x);
  double expect = kPi * dd * (0.36 - 0.04);
  CHECK(radial_excess_energy(u2, kOrigin, 0.5, 0.2, 0.6) ==
        doctest::Approx(expect).epsilon(0.05));

  // lambda^2 scaling
  QField su = u2;
  for (double& x : su.raw()) x *= 3.0;
  CHECK(radial_excess_energy(su, kOrigin, 0.5, 0.2, 0.6) ==
        doctest::Approx(9.0 * radial_excess_energy(u2, kOrigin, 0.5, 0.2, 0.6))
            .epsilon(1e-9));

  CHECK_THROWS(radial_excess_energy(cone, kOrigin, 0.5, cone.grid().h, 0.5));
}
