#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "qval/blowup.hpp"
#include "qval/cylindrical.hpp"
#include "qval/frequency.hpp"
#include "qval/qfield.hpp"

using namespace qval;

namespace {

constexpr double kPi = std::numbers::pi;
const std::array<double, 3> kOrigin = {0.0, 0.0, 0.0};

const CoeffVec kC = {Complex(1, 0), Complex(0, 1)};

CylindricalFunction half_cone(const CoeffVec& c = kC) {
  return CylindricalFunction(2, static_cast<int>(c.size()), 1, 2,
                             {CylComponent{false, c, 1}});
}

QField sampled(const CylindricalFunction& phi, int nodes) {
  return sample_field([&phi](std::span<const double> X) { return phi.eval(X); },
                      GridSpec::centered_box(phi.n(), nodes), phi.q(), phi.m());
}

// branches of Re(c z^{1/2}) + Re(d z^{3/2})
FieldEvaluator two_term(const CoeffVec& c, const CoeffVec& d) {
  return [c, d](std::span<const double> X) {
    const Complex z(X[0], X[1]);
    const double r = std::abs(z);
    double th = std::arg(z);
    if (th < 0) th += 2 * kPi;
    const size_t m = c.size();
    std::vector<double> flat(2 * m, 0.0);
    for (int l = 0; l < 2; ++l) {
      const Complex w1 = std::polar(std::sqrt(r), 0.5 * (th + 2 * kPi * l));
      const Complex w3 = std::polar(std::pow(r, 1.5), 1.5 * (th + 2 * kPi * l));
      for (size_t k = 0; k < m; ++k)
        flat[l * m + k] = (c[k] * w1).real() + (d[k] * w3).real();
    }
    return AqPoint(2, static_cast<int>(m), std::move(flat));
  };
}

}  // namespace

TEST_CASE("rescale: normalization, homogeneity quotient, composition") {
  auto phi = half_cone();
  QField u = sampled(phi, 257);

  QField r1 = rescale(u, kOrigin, 0.5, 65);
  CHECK(std::sqrt(l2_sq_ball(r1, BallSpec{kOrigin, 1.0})) ==
        doctest::Approx(1.0).epsilon(0.01));

  // homogeneous field: rescalings at different scales agree
  QField r2 = rescale(u, kOrigin, 1.0, 65);
  CHECK(std::sqrt(dist_sq_ball(r1, r2, BallSpec{kOrigin, 1.0})) <= 1e-3);

  // composition: rescale(u, 0, rho sigma) == rescale(rescale(u, 0, rho), 0, sigma)
  QField a = rescale(u, kOrigin, 0.25, 65);
  QField b = rescale(rescale(u, kOrigin, 0.5, 129), kOrigin, 0.5, 65);
  CHECK(std::sqrt(dist_sq_ball(a, b, BallSpec{kOrigin, 1.0})) <= 1e-2);

  // frequency covariance: N of the rescaling at s is N of u at rho s
  QField fine = rescale(u, kOrigin, 0.5, 257);
  CHECK(N_of(fine, kOrigin, 0.6) == doctest::Approx(N_of(u, kOrigin, 0.3)).epsilon(0.04));

  QField zero(GridSpec::centered_box(2, 65), 1, 1);
  CHECK_THROWS(rescale(zero, kOrigin, 0.5));
}

TEST_CASE("excess basics") {
  auto phi = half_cone();
  QField u = sampled(phi, 129);
  CHECK(excess(u, phi) <= 1e-12);

  // constant shift of every value: excess = sqrt(q pi) |delta| on B_1
  std::vector<double> delta = {0.03, -0.04};
  QField shifted = sample_field(
      [&](std::span<const double> X) { return translate(phi.eval(X), delta); },
      u.grid(), 2, 2);
  const double dnorm = std::hypot(delta[0], delta[1]);
  CHECK(excess(shifted, phi) ==
        doctest::Approx(std::sqrt(2.0 * kPi) * dnorm).epsilon(0.01));

  // excess(lambda u, lambda phi) = lambda excess(u, phi)
  QField su = shifted;
  for (double& x : su.raw()) x *= 3.0;
  CylindricalFunction sphi(2, 2, 1, 2,
                           {CylComponent{false, {3.0 * kC[0], 3.0 * kC[1]}, 1}});
  CHECK(excess(su, sphi) == doctest::Approx(3.0 * excess(shifted, phi)).epsilon(1e-9));

  CylindricalFunction other(3, 2, 1, 2,
                            {CylComponent{false, kC, 1}, CylComponent{true, {}, 1}});
  CHECK_THROWS(excess(u, other));
}

TEST_CASE("structure enumeration") {
  auto s22 = enumerate_structures(2, 1, 2);
  // q=2, q0=2: a single nonzero component of multiplicity 1
  REQUIRE(s22.size() == 1);
  CHECK(s22[0].multiplicities == std::vector<int>{1});
  CHECK(s22[0].zero_multiplicity == 0);

  auto s32 = enumerate_structures(3, 1, 2);
  REQUIRE(s32.size() == 1);
  CHECK(s32[0].zero_multiplicity == 1);

  auto s41 = enumerate_structures(4, 1, 1);
  CHECK(s41.size() > 3);  // partitions of up to 4 into parts plus zero rest

  CHECK_THROWS(enumerate_structures(7, 1, 2));
  CHECK_THROWS(enumerate_structures(4, 1, 4));
}

TEST_CASE("fit recovers exact cylinder coefficients") {
  auto phi = half_cone();
  QField u = sampled(phi, 129);
  TangentStructure s{1, 2, {1}, 0};
  FitResult fit = fit_tangent(u, s);
  CHECK(fit.converged);
  CHECK(fit.excess <= 1e-10);
  REQUIRE(fit.coeffs.size() == 1);
  CHECK(std::sqrt(gauge_distance_sq({kC}, fit.coeffs, 2)) <= 1e-8);

  // gauge invariance: refitting from phase-rotated inits lands on the same
  // canonical coefficients
  FitOptions o;
  o.init_coeffs = std::vector<CoeffVec>{{-kC[0], -kC[1]}};
  o.random_inits = 0;
  FitResult fit2 = fit_tangent(u, s, o);
  CHECK(std::sqrt(gauge_distance_sq(fit.coeffs, fit2.coeffs, 2)) <= 1e-10);
}

TEST_CASE("fit with noise stays within the A5 bracket scale") {
  auto phi = half_cone();
  QField u = sampled(phi, 129);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  const double eps = 1e-3;
  QField noisy = u;
  for (double& x : noisy.raw()) x += eps * g(rng);
  TangentStructure s{1, 2, {1}, 0};
  FitResult fit = fit_tangent(noisy, s);
  CHECK(std::sqrt(gauge_distance_sq({kC}, fit.coeffs, 2)) <= 5.0 * eps);
}

TEST_CASE("fit discovers a zero component when q is not exhausted") {
  // two branches of the half cone plus one identically-zero sheet
  auto phi = half_cone();
  FieldEvaluator f = [&phi](std::span<const double> X) {
    AqPoint base = phi.eval(X);
    std::vector<double> flat(base.flat());
    flat.insert(flat.end(), {0.0, 0.0});
    return AqPoint(3, 2, std::move(flat));
  };
  QField u = sample_field(f, GridSpec::centered_box(2, 129), 3, 2);
  FitResult fit = fit_tangent(u, 1, 2);  // enumerate structures
  CHECK(fit.structure.zero_multiplicity == 1);
  CHECK(fit.excess <= 1e-8);
  CHECK(std::sqrt(gauge_distance_sq({kC}, fit.coeffs, 2)) <= 1e-6);
}

TEST_CASE("sheet decomposition and reassembly") {
  auto phi = half_cone();
  QField u = sampled(phi, 129);
  auto dec = decompose_sheets(u, phi, 0.25, 0.9);
  CHECK(!dec.nodes.empty());
  // offsets vanish for u = phi
  const GridSpec& g = u.grid();
  for (size_t t = 0; t < std::min<size_t>(dec.nodes.size(), 32); ++t) {
    auto idx = g.unflatten(dec.nodes[t]);
    auto pos = g.position(std::span<const int>(idx.data(), 2));
    for (int slot = 0; slot < 2; ++slot) {
      auto off = dec.offset(t, slot, pos);
      CHECK(std::hypot(off[0], off[1]) <= 1e-12);
    }
  }
  CHECK(reassemble(u, dec) == u);  // bitwise

  // constant per-branch offsets below sep/4 are recovered
  const std::vector<double> shift = {0.01, -0.02};
  QField us = sample_field(
      [&](std::span<const double> X) { return translate(phi.eval(X), shift); },
      u.grid(), 2, 2);
  auto dec2 = decompose_sheets(us, phi, 0.25, 0.9);
  for (size_t t = 0; t < std::min<size_t>(dec2.nodes.size(), 32); ++t) {
    auto idx = g.unflatten(dec2.nodes[t]);
    auto pos = g.position(std::span<const int>(idx.data(), 2));
    for (int slot = 0; slot < 2; ++slot) {
      auto off = dec2.offset(t, slot, pos);
      CHECK(off[0] == doctest::Approx(shift[0]).epsilon(1e-9));
      CHECK(off[1] == doctest::Approx(shift[1]).epsilon(1e-9));
    }
  }
  CHECK(reassemble(us, dec2) == us);

  // ambiguous assignment is rejected with a located error
  QField big = sample_field(
      [&](std::span<const double> X) {
        return translate(phi.eval(X), std::vector<double>{10.0, 0.0});
      },
      u.grid(), 2, 2);
  CHECK_THROWS_WITH_AS(decompose_sheets(big, phi, 0.25, 0.9, 2.0),
                       doctest::Contains("separation precondition"), std::runtime_error);
}

TEST_CASE("fourier tilt: constants, zero, linear recovery") {
  auto phi = half_cone();

  // w = D_x phi . lambda0 for a constant lambda0: lambda(z) = lambda0
  const std::array<double, 2> lambda0 = {0.37, -0.21};
  OffsetGroupFn w_const = [&phi, lambda0](std::span<const double> X,
                                          std::vector<double>& out) {
    double r, th;
    phi.polar(X, r, th);
    out.clear();
    for (int l = 0; l < 2; ++l) {
      const Complex f = 0.5 * std::polar(std::pow(r, -0.5), -0.5 * (th + 2 * kPi * l));
      for (int k = 0; k < 2; ++k) {
        const Complex fk = kC[k] * f;  // D1 = Re, D2 = -Im per coordinate
        out.push_back(lambda0[0] * fk.real() - lambda0[1] * fk.imag());
      }
    }
  };
  TiltResult t = fourier_tilt(phi, w_const, {});
  REQUIRE(t.lambda.size() == 1);
  CHECK(t.lambda[0][0] == doctest::Approx(lambda0[0]).epsilon(1e-10));
  CHECK(t.lambda[0][1] == doctest::Approx(lambda0[1]).epsilon(1e-10));

  // w = 0
  OffsetGroupFn w_zero = [](std::span<const double>, std::vector<double>& out) {
    out.assign(4, 0.0);
  };
  TiltResult tz = fourier_tilt(phi, w_zero, {});
  CHECK(std::abs(tz.lambda[0][0]) <= 1e-15);
  CHECK(std::abs(tz.lambda[0][1]) <= 1e-15);

  // n = 3: offsets D_x phi . (A0 z) recover A0
  CylindricalFunction phi3(2, 2, 1, 2, {CylComponent{false, kC, 1}}, 3);
  const std::array<double, 2> A0 = {0.125, -0.5};
  OffsetGroupFn w_lin = [&phi3, A0](std::span<const double> X, std::vector<double>& out) {
    double r, th;
    phi3.polar(X, r, th);
    const double z = X[2];
    out.clear();
    for (int l = 0; l < 2; ++l) {
      const Complex f = 0.5 * std::polar(std::pow(r, -0.5), -0.5 * (th + 2 * kPi * l));
      for (int k = 0; k < 2; ++k) {
        const Complex fk = kC[k] * f;
        out.push_back(A0[0] * z * fk.real() - A0[1] * z * fk.imag());
      }
    }
  };
  std::vector<double> slices;
  for (int i = -16; i <= 16; ++i) slices.push_back(i / 32.0);
  TiltResult t3 = fourier_tilt(phi3, w_lin, slices);
  REQUIRE(t3.tilt.size() == 2);
  CHECK(t3.tilt[0] == doctest::Approx(A0[0]).epsilon(1e-6));
  CHECK(t3.tilt[1] == doctest::Approx(A0[1]).epsilon(1e-6));

  // all-zero reference is rejected
  CylindricalFunction zphi(1, 2, 1, 1, {CylComponent{true, {}, 1}});
  CHECK_THROWS(fourier_tilt(zphi, w_zero, {}));
}

TEST_CASE("fourier tilt through a sampled field") {
  auto phi = half_cone();
  const std::array<double, 2> lambda0 = {0.05, 0.08};
  FieldEvaluator f = [&phi, lambda0](std::span<const double> X) {
    double r, th;
    phi.polar(X, r, th);
    std::vector<double> flat(4, 0.0);
    for (int l = 0; l < 2; ++l) {
      const Complex w1 = std::polar(std::sqrt(r), 0.5 * (th + 2 * kPi * l));
      const Complex fd = r == 0.0 ? Complex(0, 0)
                                  : 0.5 * std::polar(std::pow(r, -0.5),
                                                     -0.5 * (th + 2 * kPi * l));
      for (int k = 0; k < 2; ++k) {
        const Complex fk = kC[k] * fd;
        flat[l * 2 + k] = (kC[k] * w1).real() + lambda0[0] * fk.real() -
                          lambda0[1] * fk.imag();
      }
    }
    return AqPoint(2, 2, std::move(flat));
  };
  QField u = sample_field(f, GridSpec::centered_box(2, 257), 2, 2);
  TiltResult t = fourier_tilt(phi, field_offsets(u, phi), {});
  CHECK(t.lambda[0][0] == doctest::Approx(lambda0[0]).epsilon(0.02));
  CHECK(t.lambda[0][1] == doctest::Approx(lambda0[1]).epsilon(0.02));
}

TEST_CASE("decay report: exact tangent status on a pure cylinder") {
  auto phi = half_cone();
  QField u = sampled(phi, 257);
  TangentStructure s{1, 2, {1}, 0};
  DecayOptions opts;
  opts.rescale_nodes = 65;  // dyadic: rescaled nodes land on source nodes
  ExcessReport rep = decay_report(u, kOrigin, 0.5, 2, s, opts);
  CHECK(rep.status == "exact tangent");
  CHECK(!rep.mu_defined);
  for (const auto& e : rep.scales) CHECK(e.exact);
}

TEST_CASE("decay report: two-term family has mu near one") {
  const CoeffVec c = kC;
  const CoeffVec d = {Complex(0.3, 0), Complex(0, -0.3)};  // d.d = 0
  QField u = sample_field(two_term(c, d), GridSpec::centered_box(2, 513), 2, 2);
  TangentStructure s{1, 2, {1}, 0};
  DecayOptions opts;
  opts.rescale_nodes = 65;
  ExcessReport rep = decay_report(u, kOrigin, 0.5, 3, s, opts);
  REQUIRE(rep.mu_defined);
  CHECK(rep.mu_fit == doctest::Approx(1.0).epsilon(0.1));

  // closed form: E(rho) = sqrt(2 pi / 5) |d| rho
  double dd = 0.0;
  for (const auto& x : d) dd += std::norm(x);
  CHECK(rep.scales[0].excess_hat ==
        doctest::Approx(std::sqrt(2 * kPi / 5 * dd)).epsilon(0.02));
  CHECK(rep.coeff_drift_finest <= 1e-3);

  std::ostringstream txt, csv;
  write_excess_report(rep, txt);
  write_excess_csv(rep, csv);
  CHECK(txt.str().find("mu_fit") != std::string::npos);
  CHECK(csv.str().starts_with("scale,excess,mu_running\n"));
}

TEST_CASE("weighted excess diagnostics are finite and cutoff stable") {
  const CoeffVec c = kC;
  const CoeffVec d = {Complex(0.3, 0), Complex(0, -0.3)};
  QField u = sample_field(two_term(c, d), GridSpec::centered_box(2, 513), 2, 2);
  auto phi = half_cone();
  QField phis = sample_field([&](std::span<const double> X) { return phi.eval(X); },
                             u.grid(), 2, 2);

  // Lemma 8.1 form: sigma = 0.5, stable under halving the inner cutoff
  double w1 = weighted_excess_radial(u, phis, kOrigin, 0.5, 0.5, 0.9, 0.02);
  double w2 = weighted_excess_radial(u, phis, kOrigin, 0.5, 0.5, 0.9, 0.01);
  CHECK(std::isfinite(w1));
  CHECK(w2 == doctest::Approx(w1).epsilon(0.05));

  // Corollary 8.6 form: bounded by a modest multiple of the excess
  double ex2 = dist_sq_ball(u, phis, BallSpec{kOrigin, 1.0});
  double wa = weighted_excess_axis(u, phis, 0.05, 0.5);
  CHECK(std::isfinite(wa));
  CHECK(wa <= 50.0 * ex2);
}
