#include "qval/minimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <ostream>
#include <optional>
#include <random>
#include <stdexcept>

#include "qval/parallel.hpp"

namespace qval {

namespace {

double sq(double x) { return x * x; }

double tuple_sep(std::span<const double> flat, int q, int m) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < q; ++i)
    for (int j = i + 1; j < q; ++j) {
      double s = 0.0;
      for (int k = 0; k < m; ++k) s += sq(flat[i * m + k] - flat[j * m + k]);
      s = std::sqrt(s);
      if (s > 0.0 && s < best) best = s;
    }
  return best;
}

}  // namespace

void SolveParams::validate() const {
  if (max_sweeps < 1) throw std::invalid_argument("solve params: max_sweeps must be positive");
  if (energy_tol < 0.0) throw std::invalid_argument("solve params: energy_tol must be nonnegative");
  if (restarts < 1) throw std::invalid_argument("solve params: restarts must be positive");
  if (perturb0 <= 0.0) throw std::invalid_argument("solve params: perturb0 must be positive");
  if (!(anneal > 0.0 && anneal < 1.0)) throw std::invalid_argument("solve params: anneal in (0,1)");
}

double discrete_energy(const QField& u) { return total_energy(u); }

namespace {

struct SweepPlan {
  // interior nodes split by parity color; neighbor lists per node
  std::array<std::vector<int64_t>, 2> colors;
  std::vector<int64_t> neighbor_flat;  // 2n entries per interior node, by color order
  std::array<std::vector<int64_t>, 2> color_neighbor_offset;
  int n_neighbors = 0;
};

SweepPlan make_plan(const QField& u) {
  const GridSpec& g = u.grid();
  SweepPlan plan;
  plan.n_neighbors = 2 * g.n;
  for (int64_t i = 0; i < u.node_count(); ++i) {
    if (u.boundary(i)) continue;
    auto idx = g.unflatten(i);
    int parity = 0;
    for (int a = 0; a < g.n; ++a) parity += idx[a];
    const int color = parity & 1;
    plan.color_neighbor_offset[color].push_back(
        static_cast<int64_t>(plan.neighbor_flat.size()));
    plan.colors[color].push_back(i);
    for (int a = 0; a < g.n; ++a) {
      for (int dir = -1; dir <= 1; dir += 2) {
        auto nb = idx;
        nb[a] += dir;
        plan.neighbor_flat.push_back(g.index(std::span<const int>(nb.data(), g.n)));
      }
    }
  }
  return plan;
}

double run_sweep(QField& u, const SweepPlan& plan) {
  const int q = u.q(), m = u.m(), len = u.tuple_len();
  const int nn = plan.n_neighbors;
  double max_delta_sq = 0.0;
  for (int color = 0; color < 2; ++color) {
    const auto& nodes = plan.colors[color];
    const auto& offsets = plan.color_neighbor_offset[color];
    std::vector<double> deltas(nodes.size(), 0.0);
    parallel_for(0, static_cast<int64_t>(nodes.size()), [&](int64_t t) {
      const int64_t node = nodes[t];
      auto cur = u.mutable_values(node);
      double fresh[64];
      std::fill(fresh, fresh + len, 0.0);
      const int64_t* nbs = plan.neighbor_flat.data() + offsets[t];
      for (int e = 0; e < nn; ++e) {
        auto nb_vals = u.values(nbs[e]);
        auto match = tuple_matching(cur, nb_vals, q, m);
        for (int j = 0; j < q; ++j)
          for (int k = 0; k < m; ++k) fresh[j * m + k] += nb_vals[match[j] * m + k];
      }
      double delta_sq = 0.0;
      for (int k = 0; k < len; ++k) {
        fresh[k] /= nn;
        delta_sq += sq(fresh[k] - cur[k]);
      }
      std::copy(fresh, fresh + len, cur.begin());
      canonicalize_tuple(cur, q, m);
      deltas[t] = delta_sq;
    });
    for (double d : deltas) max_delta_sq = std::max(max_delta_sq, d);
  }
  return std::sqrt(max_delta_sq);
}

void perturb_field(QField& u, double level, std::mt19937_64& rng) {
  const int q = u.q(), m = u.m();
  if (q == 1) return;  // no sheet structure to shake
  // collect finite separations to target the low-separation region
  std::vector<double> seps;
  for (int64_t i = 0; i < u.node_count(); ++i) {
    if (u.boundary(i)) continue;
    double s = tuple_sep(u.values(i), q, m);
    if (std::isfinite(s)) seps.push_back(s);
  }
  if (seps.empty()) return;
  std::nth_element(seps.begin(), seps.begin() + seps.size() / 2, seps.end());
  const double threshold = seps[seps.size() / 2];
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int64_t i = 0; i < u.node_count(); ++i) {
    if (u.boundary(i)) continue;
    auto vals = u.mutable_values(i);
    double s = tuple_sep(vals, q, m);
    if (!std::isfinite(s) || s >= threshold) continue;
    const double amp = level * s;
    for (double& x : vals) x += amp * unit(rng);
    canonicalize_tuple(vals, q, m);
  }
}

}  // namespace

MinimizeResult minimize(const QField& init, const SolveParams& params) {
  params.validate();
  if (init.tuple_len() > 64)
    throw std::invalid_argument("minimize: q*m larger than supported scratch size");
  for (double x : init.raw())
    if (!std::isfinite(x)) throw std::invalid_argument("minimize: non-finite init");

  const SweepPlan plan = make_plan(init);
  std::optional<MinimizeResult> best;
  int total_sweeps = 0;
  std::mt19937_64 rng(params.seed);

  for (int restart = 0; restart < params.restarts; ++restart) {
    QField u = init;
    if (restart > 0) {
      const double level = params.perturb0 * std::pow(params.anneal, restart - 1);
      perturb_field(u, level, rng);
    }
    std::vector<SweepLogEntry> log;
    double energy = discrete_energy(u);
    if (!std::isfinite(energy)) throw std::runtime_error("minimize: non-finite energy");
    log.push_back({0, energy, 0.0});
    for (int sweep = 1; sweep <= params.max_sweeps; ++sweep) {
      const double max_delta = run_sweep(u, plan);
      const double fresh = discrete_energy(u);
      if (fresh > energy * (1.0 + 1e-12) + 1e-300)
        throw std::runtime_error("minimize: energy increased within a sweep sequence");
      log.push_back({sweep, fresh, max_delta});
      ++total_sweeps;
      const double decrease = energy - fresh;
      energy = fresh;
      if (energy == 0.0) break;
      if (params.energy_tol > 0.0 && decrease < params.energy_tol * energy) break;
    }
    if (!best || energy < best->energy)
      best = MinimizeResult{std::move(u), std::move(log), energy, restart, 0};
  }
  best->total_sweeps = total_sweeps;
  return std::move(*best);
}

MinimizeResult minimize(const QField& boundary, const QField& init,
                        const SolveParams& params) {
  if (boundary.grid() != init.grid() || boundary.q() != init.q() ||
      boundary.m() != init.m())
    throw std::invalid_argument("minimize: boundary/init shape mismatch");
  for (int64_t i = 0; i < init.node_count(); ++i) {
    if (!init.boundary(i)) continue;
    auto a = boundary.values(i);
    auto b = init.values(i);
    if (!std::equal(a.begin(), a.end(), b.begin()))
      throw std::invalid_argument("minimize: init disagrees with boundary on the mask");
  }
  return minimize(init, params);
}

void write_sweep_log_csv(const std::vector<SweepLogEntry>& log, std::ostream& out) {
  out << "sweep,energy,max_node_delta\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", e.sweep, e.energy, e.max_delta);
    out << buf;
  }
}

ScalarTestField radial_bump_scalar(int n, double radius) {
  const double R2 = radius * radius;
  ScalarTestField f;
  f.value = [R2](std::span<const double> X) {
    double s = 0.0;
    for (double x : X) s += x * x;
    if (s >= R2) return 0.0;
    double g = 1.0 - s / R2;
    return g * g * g;
  };
  f.gradient = [R2](std::span<const double> X) {
    double s = 0.0;
    for (double x : X) s += x * x;
    std::vector<double> grad(X.size(), 0.0);
    if (s >= R2) return grad;
    double g = 1.0 - s / R2;
    double gp = 3.0 * g * g * (-2.0 / R2);
    for (size_t a = 0; a < X.size(); ++a) grad[a] = gp * X[a];
    return grad;
  };
  return f;
}

VectorTestField translation_bump(std::span<const double> zeta0, double radius) {
  const double R2 = radius * radius;
  const std::vector<double> z0(zeta0.begin(), zeta0.end());
  VectorTestField f;
  f.value = [z0, R2](std::span<const double> X) {
    double s = 0.0;
    for (double x : X) s += x * x;
    std::vector<double> v(z0.size(), 0.0);
    if (s >= R2) return v;
    double g = 1.0 - s / R2;
    double g3 = g * g * g;
    for (size_t j = 0; j < z0.size(); ++j) v[j] = z0[j] * g3;
    return v;
  };
  f.jacobian = [z0, R2](std::span<const double> X) {
    const size_t n = X.size();
    std::vector<double> J(n * n, 0.0);
    double s = 0.0;
    for (double x : X) s += x * x;
    if (s >= R2) return J;
    double g = 1.0 - s / R2;
    double gp = 3.0 * g * g * (-2.0 / R2);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < std::min(n, z0.size()); ++j)
        J[i * n + j] = z0[j] * gp * X[i];
    return J;
  };
  return f;
}

namespace {

// Matched-sheet central-difference gradient at an interior node:
// grad[a*q*m + j*m + k] = D_a u_j^k.
void node_gradient(const QField& u, const std::array<int, 3>& idx,
                   std::vector<double>& grad) {
  const GridSpec& g = u.grid();
  const int q = u.q(), m = u.m();
  const int64_t node = g.index(std::span<const int>(idx.data(), g.n));
  auto base = u.values(node);
  grad.assign(static_cast<size_t>(g.n) * q * m, 0.0);
  for (int a = 0; a < g.n; ++a) {
    auto plus = idx, minus = idx;
    ++plus[a];
    --minus[a];
    auto vp = u.values(g.index(std::span<const int>(plus.data(), g.n)));
    auto vm = u.values(g.index(std::span<const int>(minus.data(), g.n)));
    auto mp = tuple_matching(base, vp, q, m);
    auto mm = tuple_matching(base, vm, q, m);
    for (int j = 0; j < q; ++j)
      for (int k = 0; k < m; ++k)
        grad[(a * q + j) * m + k] =
            (vp[mp[j] * m + k] - vm[mm[j] * m + k]) / (2.0 * g.h);
  }
}

[[noreturn]] void support_error() {
  throw std::invalid_argument(
      "stationarity residual: test function support escapes the interior");
}

}  // namespace

double squash_residual(const QField& u, const ScalarTestField& zeta) {
  const GridSpec& g = u.grid();
  const int q = u.q(), m = u.m();
  const double cell = std::pow(g.h, g.n);
  const int64_t count = u.node_count();
  std::vector<double> terms(count, 0.0);
  parallel_for(0, count, [&](int64_t i) {
    auto idx = g.unflatten(i);
    auto pos = g.position(std::span<const int>(idx.data(), g.n));
    std::span<const double> X(pos.data(), g.n);
    const double z = zeta.value(X);
    auto dz = zeta.gradient(X);
    if (u.boundary(i)) {
      bool zero = z == 0.0;
      for (double d : dz) zero = zero && d == 0.0;
      if (!zero) support_error();
      return;
    }
    if (z == 0.0) {
      bool all_zero = true;
      for (double d : dz) all_zero = all_zero && d == 0.0;
      if (all_zero) return;
    }
    std::vector<double> grad;
    node_gradient(u, idx, grad);
    auto base = u.values(i);
    double grad_sq = 0.0, pairing = 0.0;
    for (int a = 0; a < g.n; ++a)
      for (int j = 0; j < q; ++j)
        for (int k = 0; k < m; ++k) {
          const double d = grad[(a * q + j) * m + k];
          grad_sq += d * d;
          pairing += base[j * m + k] * d * dz[a];
        }
    terms[i] = (grad_sq * z + pairing) * cell;
  });
  return pairwise_sum(terms);
}

double squeeze_residual(const QField& u, const VectorTestField& zeta) {
  const GridSpec& g = u.grid();
  const int n = g.n, q = u.q(), m = u.m();
  const double cell = std::pow(g.h, g.n);
  const int64_t count = u.node_count();
  std::vector<double> terms(count, 0.0);
  parallel_for(0, count, [&](int64_t i) {
    auto idx = g.unflatten(i);
    auto pos = g.position(std::span<const int>(idx.data(), g.n));
    std::span<const double> X(pos.data(), g.n);
    auto J = zeta.jacobian(X);
    bool all_zero = true;
    for (double x : J) all_zero = all_zero && x == 0.0;
    if (u.boundary(i)) {
      auto v = zeta.value(X);
      bool zero = all_zero;
      for (double x : v) zero = zero && x == 0.0;
      if (!zero) support_error();
      return;
    }
    if (all_zero) return;
    std::vector<double> grad;
    node_gradient(u, idx, grad);
    double grad_sq = 0.0;
    for (double d : grad) grad_sq += d * d;
    double value = 0.0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        double stress = (a == b) ? 0.5 * grad_sq : 0.0;
        double dot = 0.0;
        for (int j = 0; j < q; ++j)
          for (int k = 0; k < m; ++k)
            dot += grad[(a * q + j) * m + k] * grad[(b * q + j) * m + k];
        value += (stress - dot) * J[a * n + b];
      }
    terms[i] = -value * cell;
  });
  return pairwise_sum(terms);
}

}  // namespace qval
