// qval: command-line front end for q-valued field generation, minimization,
// frequency and decay analysis, and the built-in self-test suite.

#include <CLI11.hpp>
#include <array>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "qval/blowup.hpp"
#include "qval/cylindrical.hpp"
#include "qval/frequency.hpp"
#include "qval/minimizer.hpp"
#include "qval/parallel.hpp"
#include "qval/qfield.hpp"

namespace {

constexpr const char* kVersion = "qval 1.0.0";
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

using namespace qval;

// ---------------------------------------------------------------------------
// Generator spec (GEN1): a grid line followed by one or more generator
// stanzas whose sampled values are concatenated per node.
//
//   GEN1
//   grid nodes 257 extent 1 n 2
//   uk q 3 k 8
//   cylinder
//   CYLF1
//   ...
//   end
struct GeneratorSpec {
  GridSpec grid;
  int q = 0;
  int m = 0;
  std::vector<FieldEvaluator> parts;
  std::vector<int> part_q;
};

GeneratorSpec parse_generator(std::istream& in) {
  GeneratorSpec spec;
  std::string tok;
  in >> tok;
  if (tok != "GEN1") throw std::runtime_error("generator spec: expected GEN1 magic");
  in >> tok;
  if (tok != "grid") throw std::runtime_error("generator spec: expected grid line");
  int nodes = 257, n = 2;
  double extent = 1.0;
  while (in >> tok) {
    if (tok == "nodes")
      in >> nodes;
    else if (tok == "extent")
      in >> extent;
    else if (tok == "n")
      in >> n;
    else
      break;
  }
  spec.grid = GridSpec::centered_box(n, nodes, extent);

  while (true) {
    if (tok == "uk") {
      int q = 0;
      double k = 0.0;
      in >> tok >> q;  // q <value>
      in >> tok >> k;  // k <value>
      spec.parts.push_back(example_uk(q, k));
      spec.part_q.push_back(q);
      if (spec.m == 0) spec.m = 2;
      if (spec.m != 2) throw std::runtime_error("generator spec: uk requires m = 2");
      spec.q += q;
    } else if (tok == "cylinder") {
      CylindricalFunction phi = CylindricalFunction::from_record(in);
      if (phi.n() != n) throw std::runtime_error("generator spec: cylinder n mismatch");
      if (spec.m == 0) spec.m = phi.m();
      if (spec.m != phi.m()) throw std::runtime_error("generator spec: mixed m");
      spec.q += phi.q();
      spec.part_q.push_back(phi.q());
      spec.parts.push_back([phi](std::span<const double> X) { return phi.eval(X); });
    } else {
      throw std::runtime_error("generator spec: unknown stanza '" + tok + "'");
    }
    if (!(in >> tok)) break;
  }
  if (spec.parts.empty()) throw std::runtime_error("generator spec: no generators");
  return spec;
}

FieldEvaluator combined_evaluator(const GeneratorSpec& spec) {
  return [spec](std::span<const double> X) {
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(spec.q) * spec.m);
    for (const auto& part : spec.parts) {
      AqPoint p = part(X);
      flat.insert(flat.end(), p.flat().begin(), p.flat().end());
    }
    return AqPoint(spec.q, spec.m, std::move(flat));
  };
}

GeneratorSpec load_generator(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open generator spec: " + path);
  return parse_generator(in);
}

bool is_qfld_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[6] = {};
  in.read(magic, 5);
  return in && std::string(magic) == "QFLD1";
}

std::array<double, 3> parse_center(const std::string& text, int n) {
  std::array<double, 3> c = {0.0, 0.0, 0.0};
  std::istringstream in(text);
  std::string item;
  int i = 0;
  while (std::getline(in, item, ',') && i < 3) c[i++] = std::stod(item);
  if (i != n)
    throw std::invalid_argument("--center needs " + std::to_string(n) + " coordinates");
  return c;
}

std::vector<double> parse_radii(const std::string& text) {
  // comma list "0.1,0.2,0.3" or range "0.1:0.5:0.05"
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    double lo, hi, step;
    char c1, c2;
    std::istringstream in(text);
    in >> lo >> c1 >> hi >> c2 >> step;
    if (!in || c1 != ':' || c2 != ':' || step <= 0)
      throw std::invalid_argument("--radii range must be lo:hi:step");
    for (double r = lo; r <= hi + 1e-12; r += step) out.push_back(r);
  } else {
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(std::stod(item));
  }
  if (out.empty()) throw std::invalid_argument("--radii is empty");
  return out;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::ostream& report_header(std::ostream& out, double h, const std::string& tolerances) {
  out << "# " << kVersion << " h=" << fmt(h) << " " << tolerances << "\n";
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
}

// ---------------------------------------------------------------------------
// selftest: compact deterministic versions of the per-module invariant
// suites; one line per check.
struct SelfTest {
  std::ostringstream report;
  bool ok = true;

  void check(const std::string& name, bool pass, const std::string& detail = "") {
    report << (pass ? "PASS " : "FAIL ") << name;
    if (!detail.empty()) report << " (" << detail << ")";
    report << "\n";
    ok = ok && pass;
  }
};

void selftest_metric(SelfTest& st, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  auto rand_point = [&](int q, int m) {
    std::vector<double> flat(static_cast<size_t>(q) * m);
    for (double& x : flat) x = g(rng);
    return AqPoint(q, m, std::move(flat));
  };
  bool sym = true, tri = true, ident = true, split = true;
  double worst_split = 0.0;
  for (int t = 0; t < 2000; ++t) {
    int q = 2 + t % 4, m = 1 + t % 3;
    AqPoint a = rand_point(q, m), b = rand_point(q, m), c = rand_point(q, m);
    sym = sym && metric(a, b) == metric(b, a);
    tri = tri && metric(a, c) <= metric(a, b) + metric(b, c) + 1e-9;
    ident = ident && metric(a, a) == 0.0;
    auto aa = average(a), bb = average(b);
    double avg = 0.0;
    for (int k = 0; k < m; ++k) avg += (aa[k] - bb[k]) * (aa[k] - bb[k]);
    double lhs = metric_sq(a, b);
    double rhs = q * avg + metric_sq(average_free(a), average_free(b));
    worst_split = std::max(worst_split, std::abs(lhs - rhs) / std::max(lhs, 1e-30));
    split = split && worst_split <= 1e-10;
  }
  st.check("metric.symmetry", sym);
  st.check("metric.triangle", tri);
  st.check("metric.identity", ident);
  st.check("metric.split_identity", split, "rel " + fmt(worst_split));
}

void selftest_cylindrical(SelfTest& st, uint64_t seed) {
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> g(0.0, 1.0);
  CoeffVec c = {Complex(g(rng), g(rng)), Complex(g(rng), g(rng))};
  CylindricalFunction phi(2, 2, 1, 2, {CylComponent{false, c, 1}});
  std::vector<double> X = {0.33, -0.71};
  std::vector<double> Xs = {0.165, -0.355};
  double err = metric(phi.eval(Xs), scalar_mul(std::sqrt(0.5), phi.eval(X)));
  st.check("cylindrical.homogeneity", err <= 1e-12, fmt(err));

  CoeffVec d = c;
  d[0] += Complex(0.1, -0.05);
  CylindricalFunction psi(2, 2, 1, 2, {CylComponent{false, d, 1}});
  auto aligned = canonical_gauge({c}, {d}, 2);
  double denom = 0.0;
  for (int k = 0; k < 2; ++k) denom += std::norm(c[k] - aligned.coeffs[0][k]);
  double ratio = circle_distance_sq(phi, psi) / denom;
  st.check("cylindrical.a5_bracket", ratio > 0.05 && ratio < 4 * std::numbers::pi,
           "ratio " + fmt(ratio));

  double closed = inner_variation_residual_closed(
      {Complex(1, 0)}, std::array<double, 2>{1.0, 0.0});
  auto num = inner_variation_residual_numeric({Complex(1, 0)}, bump_field({1.0, 0.0}),
                                              {0.1, 0.05}, 512, 256);
  st.check("cylindrical.inner_variation",
           num.converged && std::abs(num.value - closed) <= 0.05 * (std::numbers::pi / 2),
           fmt(num.value));
}

void selftest_field(SelfTest& st) {
  CylindricalFunction phi(2, 2, 1, 2,
                          {CylComponent{false, {Complex(1, 0), Complex(0, 1)}, 1}});
  QField u = sample_field([&phi](std::span<const double> X) { return phi.eval(X); },
                          GridSpec::centered_box(2, 257), 2, 2);
  double shell = H_of(u, {0, 0, 0}, 0.4);
  double vol = H_of_volume(u, {0, 0, 0}, 0.4);
  st.check("qfield.h_two_path", std::abs(shell - vol) <= 0.01 * vol,
           fmt(shell) + " vs " + fmt(vol));
  double N = N_of(u, {0, 0, 0}, 0.4);
  st.check("frequency.half_cone", std::abs(N - 0.5) <= 0.02, fmt(N));
  double W = weiss(u, {0, 0, 0}, 0.4, 0.5);
  st.check("frequency.weiss_floor",
           std::abs(W) <= 0.02 * std::max(1.0, H_of(u, {0, 0, 0}, 0.4)), fmt(W));

  QField uk = sample_field(example_uk(3, 8.0), GridSpec::centered_box(2, 257), 3, 2);
  auto clusters = detect_branch_points(uk, default_branch_threshold(uk.grid().h, 0.5));
  bool three = clusters.size() == 3;
  double worst = 0.0;
  for (const auto& cl : clusters)
    worst = std::max(worst, std::abs(std::hypot(cl.centroid[0], cl.centroid[1]) - 0.5));
  st.check("qfield.branch_clusters", three && worst <= 1.5 * uk.grid().h,
           std::to_string(clusters.size()) + " clusters, radial err " + fmt(worst));
}

void selftest_minimizer(SelfTest& st, uint64_t seed) {
  GridSpec g = GridSpec::centered_box(2, 33);
  QField init(g, 2, 2);
  CylindricalFunction phi(2, 2, 1, 2,
                          {CylComponent{false, {Complex(1, 0), Complex(0, 1)}, 1}});
  for (int64_t i = 0; i < init.node_count(); ++i) {
    if (!init.boundary(i)) continue;
    auto idx = g.unflatten(i);
    auto pos = g.position(std::span<const int>(idx.data(), 2));
    init.set_point(i, phi.eval(std::span<const double>(pos.data(), 2)));
  }
  SolveParams params;
  params.max_sweeps = 800;
  params.energy_tol = 1e-12;
  params.restarts = 2;
  params.seed = seed;
  auto r1 = minimize(init, params);
  auto r2 = minimize(init, params);
  bool monotone = true;
  for (size_t i = 1; i < r1.log.size(); ++i)
    monotone = monotone && r1.log[i].energy <= r1.log[i - 1].energy * (1 + 1e-12);
  st.check("minimizer.monotone", monotone);
  st.check("minimizer.deterministic", r1.field == r2.field, "energy " + fmt(r1.energy));
  QField analytic =
      sample_field([&phi](std::span<const double> X) { return phi.eval(X); }, g, 2, 2);
  double dist = std::sqrt(dist_sq_ball(r1.field, analytic, BallSpec{{0, 0, 0}, 1.0}));
  st.check("minimizer.branched_distance", dist <= 0.2, fmt(dist));
}

void selftest_blowup(SelfTest& st) {
  CoeffVec c = {Complex(1, 0), Complex(0, 1)};
  CylindricalFunction phi(2, 2, 1, 2, {CylComponent{false, c, 1}});
  QField u = sample_field([&phi](std::span<const double> X) { return phi.eval(X); },
                          GridSpec::centered_box(2, 129), 2, 2);
  TangentStructure s{1, 2, {1}, 0};
  FitOptions fo;
  fo.seed = 31;
  FitResult fit = fit_tangent(u, s, fo);
  double err = std::sqrt(gauge_distance_sq({c}, fit.coeffs, 2));
  st.check("blowup.fit_recovery", fit.excess <= 1e-8 && err <= 1e-8,
           "excess " + fmt(fit.excess));

  const std::array<double, 2> lambda0 = {0.37, -0.21};
  OffsetGroupFn w = [&phi, c, lambda0](std::span<const double> X,
                                       std::vector<double>& out) {
    double r, th;
    phi.polar(X, r, th);
    out.clear();
    for (int l = 0; l < 2; ++l) {
      const Complex f =
          0.5 * std::polar(std::pow(r, -0.5), -0.5 * (th + 2 * std::numbers::pi * l));
      for (int k = 0; k < 2; ++k) {
        const Complex fk = c[k] * f;
        out.push_back(lambda0[0] * fk.real() - lambda0[1] * fk.imag());
      }
    }
  };
  TiltResult t = fourier_tilt(phi, w, {});
  st.check("blowup.tilt_recovery",
           std::abs(t.lambda[0][0] - lambda0[0]) <= 1e-9 &&
               std::abs(t.lambda[0][1] - lambda0[1]) <= 1e-9,
           fmt(t.lambda[0][0]) + "," + fmt(t.lambda[0][1]));
}

int run_selftest(uint64_t seed, const std::string& out_path) {
  SelfTest st;
  st.report << "# " << kVersion << " selftest seed=" << seed << "\n";
  selftest_metric(st, seed);
  selftest_cylindrical(st, seed);
  selftest_field(st);
  selftest_minimizer(st, seed);
  selftest_blowup(st);
  st.report << (st.ok ? "ALL PASS\n" : "FAILURES PRESENT\n");
  if (out_path.empty())
    std::cout << st.report.str();
  else
    write_text_file(out_path, st.report.str());
  return st.ok ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(kVersion) + " - q-valued Dirichlet energy laboratory"};
  app.set_config("--config");
  int threads = 0;
  app.add_option("--threads", threads, "worker thread count (QVAL_THREADS fallback)");

  auto* gen = app.add_subcommand("generate", "sample a field from a generator spec");
  std::string gen_spec, gen_out;
  gen->add_option("--spec", gen_spec, "GEN1 generator spec file")->required();
  gen->add_option("--out", gen_out, "output QFLD1 path")->required();

  auto* freq = app.add_subcommand("frequency", "frequency/Weiss profile of a field");
  std::string f_field, f_center = "0,0", f_radii = "0.1:0.5:0.05", f_out;
  double f_alpha = 0.5;
  freq->add_option("--field", f_field, "QFLD1 field")->required();
  freq->add_option("--center", f_center, "center coordinates, comma separated");
  freq->add_option("--radii", f_radii, "comma list or lo:hi:step");
  freq->add_option("--alpha", f_alpha, "degree for the Weiss quantity");
  freq->add_option("--out", f_out, "output CSV (stdout when omitted)");

  auto* mini = app.add_subcommand("minimize", "relax a boundary-value problem");
  std::string m_boundary, m_out, m_log;
  SolveParams m_params;
  mini->add_option("--boundary", m_boundary, "GEN1 spec or QFLD1 file")->required();
  mini->add_option("--out", m_out, "output QFLD1 path")->required();
  mini->add_option("--log", m_log, "iteration log CSV path");
  mini->add_option("--sweeps", m_params.max_sweeps, "max sweeps");
  mini->add_option("--tol", m_params.energy_tol, "relative energy decrease threshold");
  mini->add_option("--restarts", m_params.restarts, "number of runs (first unperturbed)");
  mini->add_option("--perturb", m_params.perturb0, "initial perturbation level");
  mini->add_option("--anneal", m_params.anneal, "perturbation decay per restart");
  mini->add_option("--seed", m_params.seed, "random seed");

  auto* dec = app.add_subcommand("decay", "excess decay report at a center");
  std::string d_field, d_center = "0,0", d_out, d_csv;
  double d_theta = 0.5;
  int d_scales = 4, d_k0 = 1, d_q0 = 2, d_nodes = 65;
  dec->add_option("--field", d_field, "QFLD1 field")->required();
  dec->add_option("--center", d_center, "center coordinates");
  dec->add_option("--theta", d_theta, "scale ratio in (0,1)");
  dec->add_option("--scales", d_scales, "number of scales past the base");
  dec->add_option("--k0", d_k0, "degree numerator");
  dec->add_option("--q0", d_q0, "degree denominator");
  dec->add_option("--rescale-nodes", d_nodes, "nodes per axis of rescaled grids");
  dec->add_option("--out", d_out, "report path (stdout when omitted)");
  dec->add_option("--csv", d_csv, "per-scale CSV path");

  auto* self = app.add_subcommand("selftest", "run the invariant suites");
  uint64_t s_seed = 1;
  std::string s_out;
  self->add_option("--seed", s_seed, "random seed");
  self->add_option("--out", s_out, "report path (stdout when omitted)");

  app.require_subcommand(1);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  if (threads <= 0) {
    if (const char* env = std::getenv("QVAL_THREADS")) threads = std::atoi(env);
  }
  set_thread_count(threads > 0 ? threads : 1);

  try {
    if (*gen) {
      GeneratorSpec spec = load_generator(gen_spec);
      QField u = sample_field(combined_evaluator(spec), spec.grid, spec.q, spec.m);
      write_qfld(u, gen_out);
      std::cout << kVersion << " wrote " << gen_out << ": n=" << spec.grid.n
                << " q=" << spec.q << " m=" << spec.m << " dims=" << spec.grid.dims[0]
                << " h=" << fmt(spec.grid.h) << "\n";
      return 0;
    }
    if (*freq) {
      QField u = read_qfld(f_field);
      auto center = parse_center(f_center, u.grid().n);
      auto radii = parse_radii(f_radii);
      FrequencyProfile p = profile(u, center, radii, f_alpha);
      std::ostringstream csv;
      report_header(csv, u.grid().h, "alpha=" + fmt(f_alpha));
      write_profile_csv(p, csv);
      if (f_out.empty())
        std::cout << csv.str();
      else
        write_text_file(f_out, csv.str());
      return 0;
    }
    if (*mini) {
      m_params.validate();
      QField init = [&] {
        if (is_qfld_file(m_boundary)) return read_qfld(m_boundary);
        GeneratorSpec spec = load_generator(m_boundary);
        QField b(spec.grid, spec.q, spec.m);
        auto eval = combined_evaluator(spec);
        for (int64_t i = 0; i < b.node_count(); ++i) {
          if (!b.boundary(i)) continue;
          auto idx = spec.grid.unflatten(i);
          auto pos = spec.grid.position(std::span<const int>(idx.data(), spec.grid.n));
          b.set_point(i, eval(std::span<const double>(pos.data(), spec.grid.n)));
        }
        return b;
      }();
      auto result = minimize(init, m_params);
      write_qfld(result.field, m_out);
      if (!m_log.empty()) {
        std::ostringstream log;
        report_header(log, init.grid().h,
                      "tol=" + fmt(m_params.energy_tol) +
                          " sweeps=" + std::to_string(m_params.max_sweeps));
        write_sweep_log_csv(result.log, log);
        write_text_file(m_log, log.str());
      }
      std::cout << kVersion << " energy " << fmt(result.energy) << " after "
                << result.total_sweeps << " sweeps (winning restart "
                << result.winning_restart << ")\n";
      return 0;
    }
    if (*dec) {
      QField u = read_qfld(d_field);
      auto center = parse_center(d_center, u.grid().n);
      auto structures = enumerate_structures(u.q(), d_k0, d_q0);
      DecayOptions opts;
      opts.rescale_nodes = d_nodes;
      std::optional<ExcessReport> best;
      for (const auto& s : structures) {
        ExcessReport rep = decay_report(u, center, d_theta, d_scales, s, opts);
        if (!best ||
            rep.scales.back().excess_hat < best->scales.back().excess_hat)
          best = std::move(rep);
      }
      std::ostringstream txt;
      report_header(txt, u.grid().h, "theta=" + fmt(d_theta));
      write_excess_report(*best, txt);
      if (d_out.empty())
        std::cout << txt.str();
      else
        write_text_file(d_out, txt.str());
      if (!d_csv.empty()) {
        std::ostringstream csv;
        report_header(csv, u.grid().h, "theta=" + fmt(d_theta));
        write_excess_csv(*best, csv);
        write_text_file(d_csv, csv.str());
      }
      return 0;
    }
    if (*self) return run_selftest(s_seed, s_out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}
