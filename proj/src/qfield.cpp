#include "qval/qfield.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "qval/assignment.hpp"
#include "qval/parallel.hpp"

static_assert(std::endian::native == std::endian::little,
              "QFLD1 serialization assumes a little-endian host");

namespace qval {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double sq(double x) { return x * x; }

double vec_dist_sq(const double* a, const double* b, int m) {
  double s = 0.0;
  for (int k = 0; k < m; ++k) s += sq(a[k] - b[k]);
  return s;
}

// min over all value pairs, coincidences counting as zero: the collision
// scale of a tuple (separation without the distinct-values convention)
double tuple_collision_scale(std::span<const double> flat, int q, int m) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < q; ++i)
    for (int j = i + 1; j < q; ++j)
      best = std::min(best,
                      std::sqrt(vec_dist_sq(flat.data() + i * m, flat.data() + j * m, m)));
  return best;
}

constexpr int kPerm3[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                              {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};

}  // namespace

double tuple_metric_sq(std::span<const double> a, std::span<const double> b,
                       int q, int m) {
  const double* pa = a.data();
  const double* pb = b.data();
  if (q == 1) return vec_dist_sq(pa, pb, m);
  if (q == 2) {
    double direct = vec_dist_sq(pa, pb, m) + vec_dist_sq(pa + m, pb + m, m);
    double crossed = vec_dist_sq(pa, pb + m, m) + vec_dist_sq(pa + m, pb, m);
    return std::min(direct, crossed);
  }
  if (q == 3) {
    double c[9];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) c[i * 3 + j] = vec_dist_sq(pa + i * m, pb + j * m, m);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : kPerm3)
      best = std::min(best, c[p[0]] + c[3 + p[1]] + c[6 + p[2]]);
    return best;
  }
  std::vector<double> cost(static_cast<size_t>(q) * q);
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j) cost[i * q + j] = vec_dist_sq(pa + i * m, pb + j * m, m);
  auto perm = min_cost_assignment(cost, q);
  return assignment_cost(cost, q, perm);
}

std::vector<int> tuple_matching(std::span<const double> a,
                                std::span<const double> b, int q, int m) {
  const double* pa = a.data();
  const double* pb = b.data();
  if (q == 1) return {0};
  if (q == 2) {
    double direct = vec_dist_sq(pa, pb, m) + vec_dist_sq(pa + m, pb + m, m);
    double crossed = vec_dist_sq(pa, pb + m, m) + vec_dist_sq(pa + m, pb, m);
    if (direct <= crossed) return {0, 1};
    return {1, 0};
  }
  if (q == 3) {
    double c[9];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) c[i * 3 + j] = vec_dist_sq(pa + i * m, pb + j * m, m);
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int p = 0; p < 6; ++p) {
      double v = c[kPerm3[p][0]] + c[3 + kPerm3[p][1]] + c[6 + kPerm3[p][2]];
      if (v < best) {
        best = v;
        arg = p;
      }
    }
    return {kPerm3[arg][0], kPerm3[arg][1], kPerm3[arg][2]};
  }
  std::vector<double> cost(static_cast<size_t>(q) * q);
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j) cost[i * q + j] = vec_dist_sq(pa + i * m, pb + j * m, m);
  return min_cost_assignment(cost, q);
}

GridSpec GridSpec::centered_box(int n, int nodes_per_axis, double extent) {
  if (n < 2 || n > 3) throw std::invalid_argument("grid: n must be 2 or 3");
  if (nodes_per_axis < 2) throw std::invalid_argument("grid: need at least 2 nodes per axis");
  GridSpec g;
  g.n = n;
  g.h = 2.0 * extent / (nodes_per_axis - 1);
  for (int a = 0; a < n; ++a) {
    g.dims[a] = nodes_per_axis;
    g.origin[a] = -extent;
  }
  for (int a = n; a < 3; ++a) {
    g.dims[a] = 1;
    g.origin[a] = 0.0;
  }
  return g;
}

int64_t GridSpec::node_count() const {
  int64_t c = 1;
  for (int a = 0; a < n; ++a) c *= dims[a];
  return c;
}

int64_t GridSpec::index(std::span<const int> idx) const {
  int64_t linear = 0;
  for (int a = 0; a < n; ++a) linear = linear * dims[a] + idx[a];
  return linear;
}

std::array<int, 3> GridSpec::unflatten(int64_t linear) const {
  std::array<int, 3> idx = {0, 0, 0};
  for (int a = n - 1; a >= 0; --a) {
    idx[a] = static_cast<int>(linear % dims[a]);
    linear /= dims[a];
  }
  return idx;
}

std::array<double, 3> GridSpec::position(std::span<const int> idx) const {
  std::array<double, 3> p = {0.0, 0.0, 0.0};
  for (int a = 0; a < n; ++a) p[a] = origin[a] + idx[a] * h;
  return p;
}

bool GridSpec::is_boundary(std::span<const int> idx) const {
  for (int a = 0; a < n; ++a)
    if (idx[a] == 0 || idx[a] == dims[a] - 1) return true;
  return false;
}

QField::QField(GridSpec grid, int q, int m) : grid_(grid), q_(q), m_(m) {
  if (grid_.n < 2 || grid_.n > 3) throw std::invalid_argument("qfield: n must be 2 or 3");
  if (grid_.h <= 0.0) throw std::invalid_argument("qfield: h must be positive");
  for (int a = 0; a < grid_.n; ++a)
    if (grid_.dims[a] < 2) throw std::invalid_argument("qfield: empty box");
  if (q_ < 1 || m_ < 1) throw std::invalid_argument("qfield: q, m must be positive");
  data_.assign(node_count() * tuple_len(), 0.0);
  boundary_.resize(node_count());
  for (int64_t i = 0; i < node_count(); ++i) {
    auto idx = grid_.unflatten(i);
    boundary_[i] = grid_.is_boundary(std::span<const int>(idx.data(), grid_.n)) ? 1 : 0;
  }
}

AqPoint QField::point(int64_t node) const {
  auto v = values(node);
  return AqPoint(q_, m_, std::vector<double>(v.begin(), v.end()));
}

void QField::set_point(int64_t node, const AqPoint& p) {
  if (p.q() != q_ || p.m() != m_) throw std::invalid_argument("set_point: shape mismatch");
  std::copy(p.flat().begin(), p.flat().end(), mutable_values(node).begin());
}

double QField::sup_norm() const {
  double best = 0.0;
  for (int64_t i = 0; i < node_count(); ++i) {
    double s = 0.0;
    for (double x : values(i)) s += x * x;
    best = std::max(best, s);
  }
  return std::sqrt(best);
}

QField sample_field(const FieldEvaluator& f, const GridSpec& grid, int q, int m) {
  QField u(grid, q, m);
  std::vector<std::string> errors(thread_count());
  parallel_for(0, u.node_count(), [&](int64_t i) {
    auto idx = grid.unflatten(i);
    auto pos = grid.position(std::span<const int>(idx.data(), grid.n));
    AqPoint p = [&] {
      try {
        return f(std::span<const double>(pos.data(), grid.n));
      } catch (const std::exception& e) {
        throw std::runtime_error("sample_field: evaluator failed at node " +
                                 std::to_string(i) + ": " + e.what());
      }
    }();
    if (p.q() != q || p.m() != m)
      throw std::runtime_error("sample_field: evaluator shape mismatch at node " +
                               std::to_string(i));
    u.set_point(i, p);
  });
  return u;
}

namespace {

void check_ball_in_box(const GridSpec& g, const BallSpec& ball) {
  for (int a = 0; a < g.n; ++a) {
    double lo = g.origin[a];
    double hi = g.origin[a] + (g.dims[a] - 1) * g.h;
    if (ball.center[a] - ball.radius < lo - 1e-12 ||
        ball.center[a] + ball.radius > hi + 1e-12)
      throw std::invalid_argument("ball escapes the grid box");
  }
}

// Fraction of the cell [lo, lo+h]^n inside the ball, by 4^n midpoint samples.
double cell_ball_fraction(const std::array<double, 3>& lo, double h, int n,
                          const BallSpec& ball) {
  const double r2 = ball.radius * ball.radius;
  int inside = 0, total = 0;
  const int sub = 4;
  std::array<int, 3> it = {0, 0, 0};
  const int kmax = (n == 2) ? 1 : sub;
  for (it[0] = 0; it[0] < sub; ++it[0])
    for (it[1] = 0; it[1] < sub; ++it[1])
      for (it[2] = 0; it[2] < kmax; ++it[2]) {
        double d2 = 0.0;
        for (int a = 0; a < n; ++a) {
          double x = lo[a] + (it[a] + 0.5) * h / sub;
          d2 += sq(x - ball.center[a]);
        }
        ++total;
        if (d2 <= r2) ++inside;
      }
  return static_cast<double>(inside) / total;
}

template <typename NodeValue>
double ball_weighted_node_sum(const QField& u, const BallSpec& ball,
                              NodeValue&& value_at) {
  const GridSpec& g = u.grid();
  check_ball_in_box(g, ball);
  // bounding index range of ball + half-cell margin
  std::array<int, 3> lo = {0, 0, 0}, hi = {0, 0, 0};
  for (int a = 0; a < g.n; ++a) {
    lo[a] = std::max(0, static_cast<int>(std::floor(
                            (ball.center[a] - ball.radius - g.origin[a]) / g.h - 0.5)));
    hi[a] = std::min(g.dims[a] - 1,
                     static_cast<int>(std::ceil(
                         (ball.center[a] + ball.radius - g.origin[a]) / g.h + 0.5)));
  }
  std::array<int, 3> span = {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1,
                             g.n == 3 ? hi[2] - lo[2] + 1 : 1};
  const int64_t count = static_cast<int64_t>(span[0]) * span[1] * span[2];
  std::vector<double> terms(count, 0.0);
  const double cell_vol = std::pow(g.h, g.n);
  parallel_for(0, count, [&](int64_t t) {
    std::array<int, 3> idx = {0, 0, 0};
    int64_t rest = t;
    for (int a = g.n - 1; a >= 0; --a) {
      idx[a] = lo[a] + static_cast<int>(rest % span[a]);
      rest /= span[a];
    }
    auto pos = g.position(std::span<const int>(idx.data(), g.n));
    std::array<double, 3> cell_lo = {pos[0] - g.h / 2, pos[1] - g.h / 2,
                                     pos[2] - g.h / 2};
    double frac = cell_ball_fraction(cell_lo, g.h, g.n, ball);
    if (frac == 0.0) return;
    terms[t] = frac * cell_vol * value_at(g.index(std::span<const int>(idx.data(), g.n)));
  });
  return pairwise_sum(terms);
}

}  // namespace

double l2_sq_ball(const QField& u, const BallSpec& ball) {
  return ball_weighted_node_sum(u, ball, [&](int64_t node) {
    double s = 0.0;
    for (double x : u.values(node)) s += x * x;
    return s;
  });
}

double dist_sq_ball(const QField& u, const QField& v, const BallSpec& ball) {
  if (u.grid() != v.grid() || u.q() != v.q() || u.m() != v.m())
    throw std::invalid_argument("dist_sq_ball: fields must share grid and shape");
  return ball_weighted_node_sum(u, ball, [&](int64_t node) {
    return tuple_metric_sq(u.values(node), v.values(node), u.q(), u.m());
  });
}

namespace {

int64_t cell_count(const GridSpec& g) {
  int64_t c = 1;
  for (int a = 0; a < g.n; ++a) c *= g.dims[a] - 1;
  return c;
}

std::array<int, 3> cell_unflatten(const GridSpec& g, int64_t linear) {
  std::array<int, 3> idx = {0, 0, 0};
  for (int a = g.n - 1; a >= 0; --a) {
    idx[a] = static_cast<int>(linear % (g.dims[a] - 1));
    linear /= g.dims[a] - 1;
  }
  return idx;
}

double cell_energy(const QField& u, const std::array<int, 3>& idx) {
  const GridSpec& g = u.grid();
  const int64_t base = g.index(std::span<const int>(idx.data(), g.n));
  double s = 0.0;
  for (int a = 0; a < g.n; ++a) {
    std::array<int, 3> nb = idx;
    ++nb[a];
    const int64_t other = g.index(std::span<const int>(nb.data(), g.n));
    s += tuple_metric_sq(u.values(base), u.values(other), u.q(), u.m());
  }
  return s * std::pow(g.h, g.n - 2);
}

}  // namespace

std::vector<double> grad_energy_density(const QField& u) {
  const GridSpec& g = u.grid();
  std::vector<double> density(cell_count(g), 0.0);
  parallel_for(0, static_cast<int64_t>(density.size()), [&](int64_t c) {
    density[c] = cell_energy(u, cell_unflatten(g, c));
  });
  return density;
}

double total_energy(const QField& u) {
  auto d = grad_energy_density(u);
  return pairwise_sum(d);
}

double energy_radial_weighted(const QField& u, const BallSpec& ball,
                              const std::function<double(double)>& weight) {
  const GridSpec& g = u.grid();
  check_ball_in_box(g, ball);
  const int64_t cells = cell_count(g);
  const double r2max = sq(ball.radius);
  std::vector<double> terms(cells, 0.0);
  parallel_for(0, cells, [&](int64_t c) {
    auto idx = cell_unflatten(g, c);
    auto pos = g.position(std::span<const int>(idx.data(), g.n));
    // mean of weight over the cell's subsample points inside the ball
    const int sub = 4;
    const int kmax = (g.n == 2) ? 1 : sub;
    double wsum = 0.0;
    int total = 0;
    std::array<int, 3> it = {0, 0, 0};
    for (it[0] = 0; it[0] < sub; ++it[0])
      for (it[1] = 0; it[1] < sub; ++it[1])
        for (it[2] = 0; it[2] < kmax; ++it[2]) {
          double d2 = 0.0;
          for (int a = 0; a < g.n; ++a) {
            double x = pos[a] + (it[a] + 0.5) * g.h / sub;
            d2 += sq(x - ball.center[a]);
          }
          ++total;
          if (d2 <= r2max) wsum += weight(d2);
        }
    if (wsum == 0.0) return;
    terms[c] = (wsum / total) * cell_energy(u, idx);
  });
  return pairwise_sum(terms);
}

double energy_in_ball(const QField& u, const BallSpec& ball) {
  return energy_radial_weighted(u, ball, [](double) { return 1.0; });
}

void interpolate(const QField& u, std::span<const double> X, std::vector<double>& out) {
  const GridSpec& g = u.grid();
  const int n = g.n;
  std::array<int, 3> base = {0, 0, 0};
  std::array<double, 3> t = {0.0, 0.0, 0.0};
  for (int a = 0; a < n; ++a) {
    double s = (X[a] - g.origin[a]) / g.h;
    int i = static_cast<int>(std::floor(s));
    i = std::clamp(i, 0, g.dims[a] - 2);
    base[a] = i;
    t[a] = std::clamp(s - i, 0.0, 1.0);
  }
  const int q = u.q(), m = u.m(), len = u.tuple_len();
  const int corners = 1 << n;
  const int64_t base_node = g.index(std::span<const int>(base.data(), n));
  auto base_vals = u.values(base_node);
  out.assign(len, 0.0);
  for (int c = 0; c < corners; ++c) {
    double w = 1.0;
    std::array<int, 3> idx = base;
    for (int a = 0; a < n; ++a) {
      if (c & (1 << a)) {
        ++idx[a];
        w *= t[a];
      } else {
        w *= 1.0 - t[a];
      }
    }
    if (w == 0.0) continue;
    auto vals = u.values(g.index(std::span<const int>(idx.data(), n)));
    if (c == 0) {
      for (int k = 0; k < len; ++k) out[k] += w * vals[k];
    } else {
      auto match = tuple_matching(base_vals, vals, q, m);
      for (int j = 0; j < q; ++j)
        for (int k = 0; k < m; ++k) out[j * m + k] += w * vals[match[j] * m + k];
    }
  }
}

AqPoint interpolate_point(const QField& u, std::span<const double> X) {
  std::vector<double> flat;
  interpolate(u, X, flat);
  return AqPoint(u.q(), u.m(), std::move(flat));
}

namespace {

std::vector<std::array<double, 3>> sphere_directions(int n, const ShellOptions& opts) {
  std::vector<std::array<double, 3>> dirs;
  if (n == 2) {
    dirs.reserve(opts.n_theta);
    for (int t = 0; t < opts.n_theta; ++t) {
      double th = kTwoPi * t / opts.n_theta;
      dirs.push_back({std::cos(th), std::sin(th), 0.0});
    }
  } else {
    // Fibonacci sphere
    dirs.reserve(opts.n_sphere);
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < opts.n_sphere; ++i) {
      double z = 1.0 - (2.0 * i + 1.0) / opts.n_sphere;
      double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      double phi = golden * i;
      dirs.push_back({rho * std::cos(phi), rho * std::sin(phi), z});
    }
  }
  return dirs;
}

}  // namespace

double shell_integral(const QField& u, const BallSpec& ball,
                      ShellIntegrand integrand, const ShellOptions& opts) {
  const GridSpec& g = u.grid();
  if (ball.radius < 2.0 * g.h)
    throw std::invalid_argument("shell_integral: radius below the resolution floor (2h)");
  const double delta = opts.fd_step > 0.0 ? opts.fd_step : g.h;
  const bool needs_derivative = integrand != ShellIntegrand::kAbsUSq;
  BallSpec probe = ball;
  if (needs_derivative) probe.radius += delta;
  check_ball_in_box(g, probe);

  auto dirs = sphere_directions(g.n, opts);
  const int q = u.q(), m = u.m();
  std::vector<double> terms(dirs.size(), 0.0);
  parallel_for(0, static_cast<int64_t>(dirs.size()), [&](int64_t i) {
    const auto& d = dirs[i];
    std::array<double, 3> p;
    for (int a = 0; a < 3; ++a) p[a] = ball.center[a] + ball.radius * d[a];
    std::vector<double> center, plus, minus;
    interpolate(u, std::span<const double>(p.data(), g.n), center);
    if (integrand == ShellIntegrand::kAbsUSq) {
      double s = 0.0;
      for (double x : center) s += x * x;
      terms[i] = s;
      return;
    }
    std::array<double, 3> pp, pm;
    for (int a = 0; a < 3; ++a) {
      pp[a] = p[a] + delta * d[a];
      pm[a] = p[a] - delta * d[a];
    }
    interpolate(u, std::span<const double>(pp.data(), g.n), plus);
    interpolate(u, std::span<const double>(pm.data(), g.n), minus);
    auto match_p = tuple_matching(center, plus, q, m);
    auto match_m = tuple_matching(center, minus, q, m);
    double s = 0.0;
    for (int j = 0; j < q; ++j)
      for (int k = 0; k < m; ++k) {
        double dr = (plus[match_p[j] * m + k] - minus[match_m[j] * m + k]) / (2.0 * delta);
        if (integrand == ShellIntegrand::kRadialDerivSq)
          s += dr * dr;
        else
          s += center[j * m + k] * dr;
      }
    terms[i] = s;
  });
  const double measure = (g.n == 2) ? kTwoPi * ball.radius
                                    : 4.0 * std::numbers::pi * sq(ball.radius);
  return pairwise_sum(terms) * measure / static_cast<double>(dirs.size());
}

double default_branch_threshold(double h, double alpha) {
  return 3.0 * std::pow(h, alpha);
}

namespace {

// Optimal-matching transport around the ring of neighbors; true when the
// composed permutation is not the identity.
bool ring_monodromy(const QField& u, const std::array<int, 3>& idx, int axis_a,
                    int axis_b) {
  static constexpr int ring[8][2] = {{1, 0},  {1, 1},   {0, 1},  {-1, 1},
                                     {-1, 0}, {-1, -1}, {0, -1}, {1, -1}};
  const GridSpec& g = u.grid();
  const int q = u.q(), m = u.m();
  std::vector<int> perm(q);
  for (int j = 0; j < q; ++j) perm[j] = j;
  for (int s = 0; s < 8; ++s) {
    std::array<int, 3> a = idx, b = idx;
    a[axis_a] += ring[s][0];
    a[axis_b] += ring[s][1];
    b[axis_a] += ring[(s + 1) % 8][0];
    b[axis_b] += ring[(s + 1) % 8][1];
    auto pa = u.values(g.index(std::span<const int>(a.data(), g.n)));
    auto pb = u.values(g.index(std::span<const int>(b.data(), g.n)));
    auto step = tuple_matching(pa, pb, q, m);
    for (int j = 0; j < q; ++j) perm[j] = step[perm[j]];
  }
  for (int j = 0; j < q; ++j)
    if (perm[j] != j) return true;
  return false;
}

}  // namespace

std::vector<BranchCluster> detect_branch_points(const QField& u, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("detect_branch_points: tau must be positive");
  const GridSpec& g = u.grid();
  const int64_t count = u.node_count();
  std::vector<uint8_t> flagged(count, 0);
  parallel_for(0, count, [&](int64_t i) {
    auto idx = g.unflatten(i);
    for (int a = 0; a < g.n; ++a)
      if (idx[a] < 1 || idx[a] > g.dims[a] - 2) return;
    if (tuple_collision_scale(u.values(i), u.q(), u.m()) >= tau) return;
    bool nontrivial = false;
    if (g.n == 2) {
      nontrivial = ring_monodromy(u, idx, 0, 1);
    } else {
      nontrivial = ring_monodromy(u, idx, 0, 1) || ring_monodromy(u, idx, 0, 2) ||
                   ring_monodromy(u, idx, 1, 2);
    }
    if (nontrivial) flagged[i] = 1;
  });

  // connected clusters under Moore adjacency
  std::vector<BranchCluster> clusters;
  std::vector<uint8_t> seen(count, 0);
  for (int64_t start = 0; start < count; ++start) {
    if (!flagged[start] || seen[start]) continue;
    BranchCluster cluster;
    std::vector<int64_t> stack = {start};
    seen[start] = 1;
    while (!stack.empty()) {
      int64_t node = stack.back();
      stack.pop_back();
      cluster.nodes.push_back(node);
      auto idx = g.unflatten(node);
      std::array<int, 3> d = {0, 0, 0};
      const int zlo = g.n == 3 ? -1 : 0, zhi = g.n == 3 ? 1 : 0;
      for (d[0] = -1; d[0] <= 1; ++d[0])
        for (d[1] = -1; d[1] <= 1; ++d[1])
          for (d[2] = zlo; d[2] <= zhi; ++d[2]) {
            if (d[0] == 0 && d[1] == 0 && d[2] == 0) continue;
            std::array<int, 3> nb = {idx[0] + d[0], idx[1] + d[1], idx[2] + d[2]};
            bool ok = true;
            for (int a = 0; a < g.n; ++a)
              if (nb[a] < 0 || nb[a] >= g.dims[a]) ok = false;
            if (!ok) continue;
            int64_t lin = g.index(std::span<const int>(nb.data(), g.n));
            if (flagged[lin] && !seen[lin]) {
              seen[lin] = 1;
              stack.push_back(lin);
            }
          }
    }
    for (int64_t node : cluster.nodes) {
      auto idx = g.unflatten(node);
      auto pos = g.position(std::span<const int>(idx.data(), g.n));
      for (int a = 0; a < 3; ++a) cluster.centroid[a] += pos[a];
    }
    for (int a = 0; a < 3; ++a) cluster.centroid[a] /= cluster.nodes.size();
    clusters.push_back(std::move(cluster));
  }
  return clusters;
}

// ---------------------------------------------------------------------------
// QFLD1 serialization

void write_qfld_stream(const QField& u, std::ostream& out) {
  const GridSpec& g = u.grid();
  char buf[64];
  out << "QFLD1\n";
  out << "n " << g.n << "\n";
  out << "q " << u.q() << "\n";
  out << "m " << u.m() << "\n";
  out << "dims";
  for (int a = 0; a < g.n; ++a) out << " " << g.dims[a];
  out << "\norigin";
  for (int a = 0; a < g.n; ++a) {
    std::snprintf(buf, sizeof(buf), "%.17g", g.origin[a]);
    out << " " << buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", g.h);
  out << "\nh " << buf << "\n";
  out.write(reinterpret_cast<const char*>(u.raw().data()),
            static_cast<std::streamsize>(u.raw().size() * sizeof(double)));
}

QField read_qfld_stream(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "QFLD1")
    throw std::runtime_error("QFLD1: bad magic");
  GridSpec g;
  int q = 0, m = 0;
  auto read_kv = [&in](const std::string& key) {
    std::string k;
    in >> k;
    if (k != key) throw std::runtime_error("QFLD1: expected header key '" + key + "'");
  };
  read_kv("n");
  in >> g.n;
  if (g.n < 2 || g.n > 3) throw std::runtime_error("QFLD1: bad n");
  read_kv("q");
  in >> q;
  read_kv("m");
  in >> m;
  read_kv("dims");
  for (int a = 0; a < g.n; ++a) in >> g.dims[a];
  read_kv("origin");
  for (int a = 0; a < g.n; ++a) in >> g.origin[a];
  read_kv("h");
  in >> g.h;
  in.get();  // newline before the binary block
  QField u(g, q, m);
  in.read(reinterpret_cast<char*>(u.raw().data()),
          static_cast<std::streamsize>(u.raw().size() * sizeof(double)));
  if (!in) throw std::runtime_error("QFLD1: truncated data block");
  return u;
}

void write_qfld(const QField& u, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_qfld_stream(u, out);
  if (!out) throw std::runtime_error("write failed: " + path);
}

QField read_qfld(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return read_qfld_stream(in);
}

void write_density_csv(const QField& u, std::span<const double> cell_values,
                       std::ostream& out) {
  const GridSpec& g = u.grid();
  if (static_cast<int64_t>(cell_values.size()) != cell_count(g))
    throw std::invalid_argument("density csv: cell value count mismatch");
  out << (g.n == 2 ? "x,y,value\n" : "x,y,z,value\n");
  char buf[64];
  for (int64_t c = 0; c < static_cast<int64_t>(cell_values.size()); ++c) {
    auto idx = cell_unflatten(g, c);
    auto pos = g.position(std::span<const int>(idx.data(), g.n));
    for (int a = 0; a < g.n; ++a) {
      std::snprintf(buf, sizeof(buf), "%.17g", pos[a] + g.h / 2);
      out << buf << ",";
    }
    std::snprintf(buf, sizeof(buf), "%.17g", cell_values[c]);
    out << buf << "\n";
  }
}

}  // namespace qval
