#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <sstream>

#include "qval/cylindrical.hpp"
#include "qval/parallel.hpp"
#include "qval/qfield.hpp"

using namespace qval;

namespace {

constexpr double kPi = std::numbers::pi;

FieldEvaluator constant_field(const AqPoint& p) {
  return [p](std::span<const double>) { return p; };
}

FieldEvaluator single_valued(std::function<double(double, double)> f) {
  return [f](std::span<const double> X) {
    return AqPoint(1, 1, {f(X[0], X.size() > 1 ? X[1] : 0.0)});
  };
}

CylindricalFunction half_cone_1i() {
  return CylindricalFunction(2, 2, 1, 2,
                             {CylComponent{false, {Complex(1, 0), Complex(0, 1)}, 1}});
}

}  // namespace

TEST_CASE("grid basics and boundary mask") {
  GridSpec g = GridSpec::centered_box(2, 5);
  CHECK(g.h == doctest::Approx(0.5));
  CHECK(g.node_count() == 25);
  QField u(g, 1, 1);
  int boundary_count = 0;
  for (int64_t i = 0; i < u.node_count(); ++i)
    if (u.boundary(i)) ++boundary_count;
  CHECK(boundary_count == 16);  // the topological boundary of a 5x5 index box
}

TEST_CASE("sampling is deterministic and matches pointwise evaluation") {
  GridSpec g = GridSpec::centered_box(2, 65);
  auto phi = half_cone_1i();
  FieldEvaluator f = [&phi](std::span<const double> X) { return phi.eval(X); };
  QField u = sample_field(f, g, 2, 2);
  QField v = sample_field(f, g, 2, 2);
  CHECK(u == v);  // bitwise

  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int64_t> pick(0, u.node_count() - 1);
  for (int t = 0; t < 10; ++t) {
    int64_t node = pick(rng);
    auto idx = g.unflatten(node);
    auto pos = g.position(std::span<const int>(idx.data(), 2));
    CHECK(metric(u.point(node), phi.eval(std::span<const double>(pos.data(), 2))) ==
          doctest::Approx(0.0));
  }

  QField c = sample_field(constant_field(AqPoint::from_values({{1.0, 2.0}})), g, 1, 2);
  for (int64_t i = 0; i < c.node_count(); ++i) {
    CHECK(c.values(i)[0] == 1.0);
    CHECK(c.values(i)[1] == 2.0);
  }
}

TEST_CASE("ball integrals") {
  GridSpec g = GridSpec::centered_box(2, 129);  // h = 1/64
  QField zero(g, 2, 2);
  BallSpec B{{0.0, 0.0, 0.0}, 0.9};
  CHECK(l2_sq_ball(zero, B) == 0.0);

  // u = 1 single-valued: integral over B_rho is pi rho^2 within 1% at h = rho/64
  QField one = sample_field(single_valued([](double, double) { return 1.0; }), g, 1, 1);
  BallSpec B1{{0.0, 0.0, 0.0}, 1.0};
  CHECK(l2_sq_ball(one, B1) == doctest::Approx(kPi).epsilon(0.01));
  CHECK(dist_sq_ball(one, one, B1) == 0.0);

  // scaling: l2 of lambda u is lambda^2 l2 of u
  QField two = sample_field(single_valued([](double, double) { return 2.0; }), g, 1, 1);
  CHECK(l2_sq_ball(two, B1) == doctest::Approx(4.0 * l2_sq_ball(one, B1)).epsilon(1e-12));

  BallSpec escape{{0.9, 0.0, 0.0}, 0.5};
  CHECK_THROWS(l2_sq_ball(one, escape));

  // symmetry of dist_sq_ball and triangle inequality after square roots
  auto phi = half_cone_1i();
  QField a = sample_field([&](std::span<const double> X) { return phi.eval(X); }, g, 2, 2);
  QField b = sample_field(
      [&](std::span<const double> X) { return scalar_mul(0.7, phi.eval(X)); }, g, 2, 2);
  QField c = sample_field(
      [&](std::span<const double> X) {
        return translate(phi.eval(X), std::vector<double>{0.1, -0.2});
      },
      g, 2, 2);
  CHECK(dist_sq_ball(a, b, B) == dist_sq_ball(b, a, B));
  double dab = std::sqrt(dist_sq_ball(a, b, B));
  double dbc = std::sqrt(dist_sq_ball(b, c, B));
  double dac = std::sqrt(dist_sq_ball(a, c, B));
  CHECK(dac <= dab + dbc + 1e-9);
}

TEST_CASE("shell integral with closed-form oracle") {
  GridSpec g = GridSpec::centered_box(2, 257);
  // u(X) = |X|: int_{dB_rho} |u|^2 = 2 pi rho * rho^2
  QField u = sample_field(single_valued([](double x, double y) { return std::hypot(x, y); }),
                          g, 1, 1);
  for (double rho : {0.3, 0.5, 0.8}) {
    double got = shell_integral(u, BallSpec{{0, 0, 0}, rho}, ShellIntegrand::kAbsUSq);
    CHECK(got == doctest::Approx(2 * kPi * rho * rho * rho).epsilon(0.01));
    // D_R u = 1: the radial-derivative integrands
    double udr = shell_integral(u, BallSpec{{0, 0, 0}, rho}, ShellIntegrand::kURadialDeriv);
    CHECK(udr == doctest::Approx(2 * kPi * rho * rho).epsilon(0.01));
    double dr2 = shell_integral(u, BallSpec{{0, 0, 0}, rho}, ShellIntegrand::kRadialDerivSq);
    CHECK(dr2 == doctest::Approx(2 * kPi * rho).epsilon(0.01));
  }
  QField zero(g, 1, 1);
  CHECK(shell_integral(zero, BallSpec{{0, 0, 0}, 0.5}, ShellIntegrand::kAbsUSq) == 0.0);
  CHECK_THROWS(shell_integral(u, BallSpec{{0, 0, 0}, g.h}, ShellIntegrand::kAbsUSq));
}

TEST_CASE("shell vs volume H agreement") {
  GridSpec g = GridSpec::centered_box(2, 257);
  auto phi = half_cone_1i();
  QField u = sample_field([&](std::span<const double> X) { return phi.eval(X); }, g, 2, 2);
  for (double rho : {0.3, 0.6}) {
    double shell = std::pow(rho, -1) *
                   shell_integral(u, BallSpec{{0, 0, 0}, rho}, ShellIntegrand::kAbsUSq);
    double mass = l2_sq_ball(u, BallSpec{{0, 0, 0}, rho});
    double swept = energy_radial_weighted(u, BallSpec{{0, 0, 0}, rho},
                                          [rho](double d2) { return 0.5 * (rho * rho - d2); });
    double vol = std::pow(rho, -2) * (2 * mass + 2 * swept);
    CHECK(shell == doctest::Approx(vol).epsilon(0.01));
  }
}

TEST_CASE("gradient energy density") {
  GridSpec g = GridSpec::centered_box(2, 129);
  QField c = sample_field(constant_field(AqPoint::from_values({{3.0, 1.0}, {0.0, 0.0}})),
                          g, 2, 2);
  CHECK(total_energy(c) == 0.0);

  // single-valued u = x1 on the box: energy density 1 per unit area
  QField lin = sample_field(single_valued([](double x, double) { return x; }), g, 1, 1);
  double area = 4.0 * (1.0 - g.h / 2) * (1.0 - g.h / 2) / (1.0 - g.h) / (1.0 - g.h);
  // cells tile [(-1, 1 - h)]^2 exactly: (dims-1)^2 cells of volume h^2 = 4
  CHECK(total_energy(lin) == doctest::Approx(4.0).epsilon(1e-9));
  (void)area;

  // q identical copies scale the energy by q
  QField lin3 = sample_field(
      [](std::span<const double> X) {
        return AqPoint(3, 1, {X[0], X[0], X[0]});
      },
      g, 3, 1);
  CHECK(total_energy(lin3) == doctest::Approx(3.0 * total_energy(lin)).epsilon(1e-9));

  // invariant under adding a constant vector to every value
  auto phi = half_cone_1i();
  QField a = sample_field([&](std::span<const double> X) { return phi.eval(X); }, g, 2, 2);
  QField b = sample_field(
      [&](std::span<const double> X) {
        return translate(phi.eval(X), std::vector<double>{0.4, -0.7});
      },
      g, 2, 2);
  CHECK(total_energy(a) == doctest::Approx(total_energy(b)).epsilon(1e-9));
}

TEST_CASE("matched interpolation is exact on separated linear sheets") {
  GridSpec g = GridSpec::centered_box(2, 65);
  QField u = sample_field(
      [](std::span<const double> X) {
        return AqPoint(2, 1, {X[0] + 10.0, -X[0] - 20.0});
      },
      g, 2, 1);
  std::vector<double> out;
  std::vector<double> p = {0.123, -0.456};
  interpolate(u, p, out);
  CHECK(out[0] == doctest::Approx(-0.123 - 20.0).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(0.123 + 10.0).epsilon(1e-12));
}

TEST_CASE("branch detection") {
  // half-degree cone: one cluster at the origin
  GridSpec g = GridSpec::centered_box(2, 257);  // h = 1/128
  auto phi = half_cone_1i();
  QField u = sample_field([&](std::span<const double> X) { return phi.eval(X); }, g, 2, 2);
  auto clusters = detect_branch_points(u, default_branch_threshold(g.h));
  REQUIRE(clusters.size() == 1);
  CHECK(std::hypot(clusters[0].centroid[0], clusters[0].centroid[1]) <= 1.5 * g.h);

  // well-separated independent harmonics: no branch points at any sane tau
  QField sep = sample_field(
      [](std::span<const double> X) {
        return AqPoint(2, 1, {X[0] + 5.0, -X[0] - 5.0});
      },
      g, 2, 1);
  CHECK(detect_branch_points(sep, 1.0).empty());

  // example_uk(3, 8): three clusters at radius 1/2, angles 2 pi j / 3
  GridSpec g3 = GridSpec::centered_box(2, 513);  // h = 1/256
  QField uk = sample_field(example_uk(3, 8.0), g3, 3, 2);
  auto uk_clusters = detect_branch_points(uk, default_branch_threshold(g3.h, 0.5));
  REQUIRE(uk_clusters.size() == 3);
  std::vector<bool> found(3, false);
  for (const auto& cl : uk_clusters) {
    double r = std::hypot(cl.centroid[0], cl.centroid[1]);
    CHECK(std::abs(r - 0.5) <= 1.5 * g3.h);
    double ang = std::atan2(cl.centroid[1], cl.centroid[0]);
    if (ang < 0) ang += 2 * kPi;
    int j = static_cast<int>(std::llround(ang / (2 * kPi / 3))) % 3;
    double target = 2 * kPi * j / 3;
    double diff = std::abs(ang - target);
    diff = std::min(diff, 2 * kPi - diff);
    CHECK(0.5 * diff <= 1.5 * g3.h);  // arc distance at radius 1/2
    found[j] = true;
  }
  CHECK((found[0] && found[1] && found[2]));
}

TEST_CASE("QFLD1 round trip is bitwise") {
  GridSpec g = GridSpec::centered_box(2, 33);
  auto phi = half_cone_1i();
  QField u = sample_field([&](std::span<const double> X) { return phi.eval(X); }, g, 2, 2);
  std::stringstream buf;
  write_qfld_stream(u, buf);
  QField back = read_qfld_stream(buf);
  CHECK(back == u);

  auto path = std::filesystem::temp_directory_path() / "qval_test_field.qfld";
  write_qfld(u, path.string());
  QField file_back = read_qfld(path.string());
  CHECK(file_back == u);
  std::filesystem::remove(path);

  std::stringstream bad("QFLDX\nnope");
  CHECK_THROWS(read_qfld_stream(bad));
}

TEST_CASE("density CSV emitter") {
  GridSpec g = GridSpec::centered_box(2, 3);
  QField u = sample_field(single_valued([](double x, double) { return x; }), g, 1, 1);
  auto d = grad_energy_density(u);
  std::ostringstream out;
  write_density_csv(u, d, out);
  std::istringstream lines(out.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header == "x,y,value");
  int rows = 0;
  std::string row;
  while (std::getline(lines, row)) ++rows;
  CHECK(rows == 4);
}

TEST_CASE("integrators are independent of the thread count") {
  GridSpec g = GridSpec::centered_box(2, 129);
  auto phi = half_cone_1i();
  QField u = sample_field([&](std::span<const double> X) { return phi.eval(X); }, g, 2, 2);
  BallSpec B{{0.0, 0.0, 0.0}, 0.8};
  set_thread_count(1);
  double l2_1 = l2_sq_ball(u, B);
  double e_1 = total_energy(u);
  double s_1 = shell_integral(u, B, ShellIntegrand::kAbsUSq);
  set_thread_count(4);
  CHECK(l2_sq_ball(u, B) == l2_1);
  CHECK(total_energy(u) == e_1);
  CHECK(shell_integral(u, B, ShellIntegrand::kAbsUSq) == s_1);
  set_thread_count(1);
}
