#include "qval/blowup.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "qval/parallel.hpp"

namespace qval {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double sq(double x) { return x * x; }

double tuple_sep_raw(std::span<const double> flat, int q, int m) {
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

QField rescale(const QField& u, const std::array<double, 3>& center, double rho,
               int nodes_per_axis) {
  const GridSpec& g = u.grid();
  if (rho <= 0.0) throw std::invalid_argument("rescale: rho must be positive");
  const double mass = l2_sq_ball(u, BallSpec{center, rho});
  if (mass <= 0.0) throw std::invalid_argument("rescale: zero L2 norm on the ball");
  const double eta = std::pow(rho, -g.n / 2.0) * std::sqrt(mass);

  int nodes = nodes_per_axis;
  if (nodes <= 0) nodes = std::clamp(2 * static_cast<int>(std::llround(rho / g.h)) + 1, 33, 513);
  GridSpec fresh = GridSpec::centered_box(g.n, nodes, 1.0);
  QField out(fresh, u.q(), u.m());
  parallel_for(0, out.node_count(), [&](int64_t i) {
    auto idx = fresh.unflatten(i);
    auto X = fresh.position(std::span<const int>(idx.data(), fresh.n));
    std::array<double, 3> p = {0.0, 0.0, 0.0};
    for (int a = 0; a < g.n; ++a) p[a] = center[a] + rho * X[a];
    std::vector<double> vals;
    interpolate(u, std::span<const double>(p.data(), g.n), vals);
    for (double& x : vals) x /= eta;
    canonicalize_tuple(vals, u.q(), u.m());
    std::copy(vals.begin(), vals.end(), out.mutable_values(i).begin());
  });
  return out;
}

double excess(const QField& u, const CylindricalFunction& phi) {
  if (u.q() != phi.q() || u.m() != phi.m())
    throw std::invalid_argument("excess: field and tangent shapes differ");
  QField phis = sample_field([&phi](std::span<const double> X) { return phi.eval(X); },
                             u.grid(), u.q(), u.m());
  return std::sqrt(dist_sq_ball(u, phis, BallSpec{{0.0, 0.0, 0.0}, 1.0}));
}

std::vector<TangentStructure> enumerate_structures(int q, int k0, int q0) {
  if (q > 6 || q0 > 3)
    throw std::invalid_argument("enumerate_structures: exhaustive bound is q <= 6, q0 <= 3");
  std::vector<TangentStructure> out;
  std::vector<int> mults;
  auto recurse = [&](auto&& self, int budget, int max_mult) -> void {
    if (!mults.empty()) {
      TangentStructure s;
      s.k0 = k0;
      s.q0 = q0;
      s.multiplicities = mults;
      s.zero_multiplicity = budget;
      out.push_back(std::move(s));
    }
    for (int next = std::min(max_mult, budget / q0); next >= 1; --next) {
      mults.push_back(next);
      self(self, budget - next * q0, next);
      mults.pop_back();
    }
  };
  recurse(recurse, q, q);
  return out;
}

namespace {

struct FitWorkspace {
  std::vector<int64_t> nodes;
  std::vector<double> weights;  // cell measure inside the ball
  std::vector<double> r, theta;
};

FitWorkspace gather_nodes(const QField& u, double radius) {
  const GridSpec& g = u.grid();
  FitWorkspace ws;
  const double cell_vol = std::pow(g.h, g.n);
  for (int64_t i = 0; i < u.node_count(); ++i) {
    auto idx = g.unflatten(i);
    auto pos = g.position(std::span<const int>(idx.data(), g.n));
    double d2 = 0.0;
    for (int a = 0; a < g.n; ++a) d2 += sq(pos[a]);
    if (d2 > sq(radius)) continue;
    ws.nodes.push_back(i);
    ws.weights.push_back(cell_vol);
    ws.r.push_back(std::hypot(pos[0], pos[1]));
    ws.theta.push_back(std::atan2(pos[1], pos[0]) < 0.0
                           ? std::atan2(pos[1], pos[0]) + kTwoPi
                           : std::atan2(pos[1], pos[0]));
  }
  return ws;
}

CylindricalFunction build_tangent(int q, int m, const TangentStructure& s,
                                  const std::vector<CoeffVec>& coeffs, int n) {
  std::vector<CylComponent> comps;
  for (int j = 0; j < s.nonzero_count(); ++j) {
    CylComponent c;
    c.zero = false;
    c.coeff = coeffs[j];
    c.multiplicity = s.multiplicities[j];
    comps.push_back(std::move(c));
  }
  if (s.zero_multiplicity > 0) {
    CylComponent z;
    z.zero = true;
    z.multiplicity = s.zero_multiplicity;
    comps.push_back(std::move(z));
  }
  return CylindricalFunction(q, m, s.k0, s.q0, std::move(comps), n);
}

// canonical gauge of (coefficient, multiplicity) pairs: phase-normalize each
// coefficient, then sort pairs
void canonicalize_fit(std::vector<CoeffVec>& coeffs, std::vector<int>& mults, int q0) {
  const size_t N = coeffs.size();
  std::vector<std::pair<CoeffVec, int>> pairs(N);
  for (size_t j = 0; j < N; ++j) {
    std::vector<CoeffVec> single = canonical_coeffs({coeffs[j]}, q0);
    pairs[j] = {single[0], mults[j]};
  }
  auto key = [](const CoeffVec& v) {
    std::vector<double> flat;
    for (auto x : v) {
      flat.push_back(x.real());
      flat.push_back(x.imag());
    }
    return flat;
  };
  std::sort(pairs.begin(), pairs.end(),
            [&](const auto& x, const auto& y) { return key(x.first) < key(y.first); });
  for (size_t j = 0; j < N; ++j) {
    coeffs[j] = pairs[j].first;
    mults[j] = pairs[j].second;
  }
}

struct AlternationResult {
  std::vector<CoeffVec> coeffs;
  double cost = std::numeric_limits<double>::infinity();
  bool fixed_point = false;
};

AlternationResult alternate_fit(const QField& u, const TangentStructure& s,
                                const FitWorkspace& ws,
                                std::vector<CoeffVec> coeffs, int max_iters) {
  const int q = u.q(), m = u.m();
  const int N = s.nonzero_count();
  const double alpha = static_cast<double>(s.k0) / s.q0;
  const int q0 = s.q0;

  // slot table: per slot, nonzero-component index (-1 for zero) and branch
  std::vector<int> slot_comp, slot_branch;
  for (int j = 0; j < N; ++j)
    for (int l = 0; l < q0; ++l)
      for (int rpt = 0; rpt < s.multiplicities[j]; ++rpt) {
        slot_comp.push_back(j);
        slot_branch.push_back(l);
      }
  for (int rpt = 0; rpt < s.zero_multiplicity; ++rpt) {
    slot_comp.push_back(-1);
    slot_branch.push_back(0);
  }

  const size_t n_nodes = ws.nodes.size();
  std::vector<int> assignment(n_nodes * q);
  std::vector<int> prev_assignment;
  std::vector<double> slot_vals(static_cast<size_t>(q) * m);
  AlternationResult best;

  for (int iter = 0; iter < max_iters; ++iter) {
    // (i) matching of node values to branch slots for the current coefficients
    double cost = 0.0;
    for (size_t t = 0; t < n_nodes; ++t) {
      const double ralpha = std::pow(ws.r[t], alpha);
      for (int slot = 0; slot < q; ++slot) {
        const int j = slot_comp[slot];
        if (j < 0) {
          std::fill_n(slot_vals.begin() + slot * m, m, 0.0);
          continue;
        }
        const Complex w = std::polar(ralpha, alpha * (ws.theta[t] + kTwoPi * slot_branch[slot]));
        for (int k = 0; k < m; ++k)
          slot_vals[slot * m + k] = (coeffs[j][k] * w).real();
      }
      auto vals = u.values(ws.nodes[t]);
      auto perm = tuple_matching(slot_vals, vals, q, m);
      std::copy(perm.begin(), perm.end(), assignment.begin() + t * q);
      double local = 0.0;
      for (int slot = 0; slot < q; ++slot)
        for (int k = 0; k < m; ++k)
          local += sq(vals[perm[slot] * m + k] - slot_vals[slot * m + k]);
      cost += ws.weights[t] * local;
    }
    if (cost < best.cost) {
      best.cost = cost;
      best.coeffs = coeffs;
    }
    if (assignment == prev_assignment) {
      best.fixed_point = true;
      break;
    }
    prev_assignment = assignment;

    // (ii) exact least squares per component for the fixed matching
    for (int j = 0; j < N; ++j) {
      double S_rr = 0.0, S_ri = 0.0, S_ii = 0.0;
      std::vector<double> b_r(m, 0.0), b_i(m, 0.0);
      for (size_t t = 0; t < n_nodes; ++t) {
        const double w_t = ws.weights[t];
        const double ralpha = std::pow(ws.r[t], alpha);
        auto vals = u.values(ws.nodes[t]);
        for (int slot = 0; slot < q; ++slot) {
          if (slot_comp[slot] != j) continue;
          const Complex w =
              std::polar(ralpha, alpha * (ws.theta[t] + kTwoPi * slot_branch[slot]));
          const double R = w.real(), I = w.imag();
          S_rr += w_t * R * R;
          S_ri += w_t * R * I;
          S_ii += w_t * I * I;
          const double* v = vals.data() + assignment[t * q + slot] * m;
          for (int k = 0; k < m; ++k) {
            b_r[k] += w_t * v[k] * R;
            b_i[k] += w_t * v[k] * I;
          }
        }
      }
      const double det = S_rr * S_ii - S_ri * S_ri;
      if (std::abs(det) < 1e-300) continue;  // degenerate block: keep previous
      for (int k = 0; k < m; ++k) {
        const double u1 = (S_ii * b_r[k] - S_ri * b_i[k]) / det;
        const double u2 = (S_rr * b_i[k] - S_ri * b_r[k]) / det;
        coeffs[j][k] = Complex(u1, -u2);
      }
    }
  }
  return best;
}

}  // namespace

FitResult fit_tangent(const QField& u, const TangentStructure& structure,
                      const FitOptions& opts) {
  const int q = u.q(), m = u.m();
  int covered = structure.zero_multiplicity;
  for (int mult : structure.multiplicities) covered += mult * structure.q0;
  if (covered != q)
    throw std::invalid_argument("fit_tangent: structure does not cover q");
  const int N = structure.nonzero_count();
  if (N == 0) throw std::invalid_argument("fit_tangent: need at least one nonzero component");

  FitWorkspace ws = gather_nodes(u, opts.ball_radius);
  if (ws.nodes.empty()) throw std::invalid_argument("fit_tangent: no nodes inside the ball");

  std::vector<std::vector<CoeffVec>> inits;
  if (opts.init_coeffs) {
    if (static_cast<int>(opts.init_coeffs->size()) != N)
      throw std::invalid_argument("fit_tangent: init coefficient count mismatch");
    inits.push_back(*opts.init_coeffs);
  }
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double scale = std::max(u.sup_norm(), 1e-12);
  for (int i = 0; i < opts.random_inits; ++i) {
    std::vector<CoeffVec> init(N, CoeffVec(m));
    for (auto& cv : init)
      for (auto& x : cv) x = scale * Complex(gauss(rng), gauss(rng));
    inits.push_back(std::move(init));
  }
  if (inits.empty()) throw std::invalid_argument("fit_tangent: no initializations");

  AlternationResult best;
  for (auto& init : inits) {
    auto r = alternate_fit(u, structure, ws, std::move(init), opts.max_alternations);
    if (r.cost < best.cost ||
        (r.cost == best.cost && r.fixed_point && !best.fixed_point))
      best = std::move(r);
  }

  std::vector<int> mults = structure.multiplicities;
  canonicalize_fit(best.coeffs, mults, structure.q0);
  TangentStructure canon = structure;
  canon.multiplicities = mults;
  FitResult out{build_tangent(q, m, canon, best.coeffs, u.grid().n), best.coeffs,
                canon, 0.0, best.fixed_point};
  out.excess = excess(u, out.tangent);
  return out;
}

FitResult fit_tangent(const QField& u, int k0, int q0, const FitOptions& opts) {
  auto structures = enumerate_structures(u.q(), k0, q0);
  if (structures.empty())
    throw std::invalid_argument("fit_tangent: no admissible structure for q, q0");
  std::optional<FitResult> best;
  for (const auto& s : structures) {
    FitOptions o = opts;
    o.init_coeffs.reset();  // enumerated structures start from scratch
    FitResult r = fit_tangent(u, s, o);
    if (!best || r.excess < best->excess) best = std::move(r);
  }
  return std::move(*best);
}

std::vector<double> SheetDecomposition::offset(size_t t, int slot,
                                               const std::array<double, 3>& pos) const {
  double r, th;
  phi.polar(std::span<const double>(pos.data(), phi.n()), r, th);
  std::vector<double> slots;
  phi.slot_values(r, th, slots);
  std::vector<double> out(m);
  for (int k = 0; k < m; ++k)
    out[k] = assigned[t * q * m + slot * m + k] - slots[slot * m + k];
  return out;
}

SheetDecomposition decompose_sheets(const QField& u, const CylindricalFunction& phi,
                                    double tau, double r_outer, double kappa) {
  if (u.q() != phi.q() || u.m() != phi.m())
    throw std::invalid_argument("decompose_sheets: shape mismatch");
  if (!(tau > 0.0 && tau < r_outer))
    throw std::invalid_argument("decompose_sheets: need 0 < tau < r_outer");
  const GridSpec& g = u.grid();
  const int q = u.q(), m = u.m();

  SheetDecomposition dec{phi, tau, r_outer, {}, {}, q, m};

  double worst_margin = std::numeric_limits<double>::infinity();
  int64_t worst_node = -1;
  std::vector<double> slots;
  for (int64_t i = 0; i < u.node_count(); ++i) {
    auto idx = g.unflatten(i);
    auto pos = g.position(std::span<const int>(idx.data(), g.n));
    double r, th;
    phi.polar(std::span<const double>(pos.data(), g.n), r, th);
    if (r < tau || r > r_outer) continue;
    phi.slot_values(r, th, slots);
    auto vals = u.values(i);
    const double dist = std::sqrt(tuple_metric_sq(slots, vals, q, m));
    const double sep = tuple_sep_raw(slots, q, m);
    const double margin = sep - kappa * 2.0 * dist;
    if (margin < worst_margin) {
      worst_margin = margin;
      worst_node = i;
    }
    auto perm = tuple_matching(slots, vals, q, m);
    dec.nodes.push_back(i);
    for (int slot = 0; slot < q; ++slot)
      for (int k = 0; k < m; ++k)
        dec.assigned.push_back(vals[perm[slot] * m + k]);
  }
  if (worst_node >= 0 && worst_margin <= 0.0) {
    auto idx = g.unflatten(worst_node);
    auto pos = g.position(std::span<const int>(idx.data(), g.n));
    std::ostringstream msg;
    msg << "decompose_sheets: separation precondition fails at node " << worst_node
        << " (";
    for (int a = 0; a < g.n; ++a) msg << (a ? "," : "") << pos[a];
    msg << "): sep phi = margin " << worst_margin;
    throw std::runtime_error(msg.str());
  }
  return dec;
}

QField reassemble(const QField& u, const SheetDecomposition& dec) {
  QField out = u;
  const int len = dec.q * dec.m;
  for (size_t t = 0; t < dec.nodes.size(); ++t) {
    auto dst = out.mutable_values(dec.nodes[t]);
    std::copy_n(dec.assigned.begin() + t * len, len, dst.begin());
    canonicalize_tuple(dst, dec.q, dec.m);
  }
  return out;
}

OffsetGroupFn field_offsets(const QField& u, const CylindricalFunction& phi0) {
  const QField* field = &u;
  CylindricalFunction phi = phi0;
  return [field, phi](std::span<const double> X, std::vector<double>& out) {
    const int q = field->q(), m = field->m();
    double r, th;
    phi.polar(X, r, th);
    std::vector<double> slots;
    phi.slot_values(r, th, slots);
    std::vector<double> vals;
    interpolate(*field, X, vals);
    auto perm = tuple_matching(slots, vals, q, m);
    // averaged offsets per (nonzero component, branch) group
    out.clear();
    const auto& comps = phi.components();
    const auto& slot_comp = phi.slot_component();
    const auto& slot_branch = phi.slot_branch();
    for (int j = 0; j < static_cast<int>(comps.size()); ++j) {
      if (comps[j].zero) continue;
      for (int l = 0; l < phi.q0(); ++l) {
        std::vector<double> avg(m, 0.0);
        int count = 0;
        for (int slot = 0; slot < q; ++slot) {
          if (slot_comp[slot] != j || slot_branch[slot] != l) continue;
          for (int k = 0; k < m; ++k)
            avg[k] += vals[perm[slot] * m + k] - slots[slot * m + k];
          ++count;
        }
        for (int k = 0; k < m; ++k) out.push_back(avg[k] / count);
      }
    }
  };
}

TiltResult fourier_tilt(const CylindricalFunction& phi0, const OffsetGroupFn& w,
                        const std::vector<double>& slices, const TiltOptions& opts) {
  if (phi0.has_rotation())
    throw std::invalid_argument("fourier_tilt: reference function must be unrotated");
  const int m = phi0.m();
  const double alpha = phi0.alpha();
  const int q0 = phi0.q0();
  const int n = phi0.n();

  // normalization c = sum_j alpha^2 m_j |c_j|^2 over nonzero components
  double c_norm = 0.0;
  std::vector<int> nonzero;
  for (int j = 0; j < static_cast<int>(phi0.components().size()); ++j) {
    const auto& comp = phi0.components()[j];
    if (comp.zero) continue;
    double abs2 = 0.0;
    for (const auto& x : comp.coeff) abs2 += std::norm(x);
    c_norm += alpha * alpha * comp.multiplicity * abs2;
    nonzero.push_back(j);
  }
  if (nonzero.empty() || c_norm <= 0.0)
    throw std::invalid_argument("fourier_tilt: all components of the reference are zero");

  TiltResult res;
  res.slices = (n == 2) ? std::vector<double>{0.0} : slices;
  if (n > 2 && slices.empty())
    throw std::invalid_argument("fourier_tilt: need axis slices for n >= 3");

  std::vector<double> groups;
  std::vector<double> X(n, 0.0);
  for (double z : res.slices) {
    double W1 = 0.0, W2 = 0.0;
    for (int ri = 0; ri < opts.n_r; ++ri) {
      const double r = opts.r_min + (opts.r_max - opts.r_min) * (ri + 0.5) / opts.n_r;
      const double r1a = std::pow(r, 1.0 - alpha);
      double acc1 = 0.0, acc2 = 0.0;
      for (int ti = 0; ti < opts.n_theta; ++ti) {
        const double theta = kTwoPi * ti / opts.n_theta;
        X[0] = r * std::cos(theta);
        X[1] = r * std::sin(theta);
        if (n > 2) X[2] = z;
        w(std::span<const double>(X.data(), n), groups);
        int group = 0;
        for (int j : nonzero) {
          const auto& comp = phi0.components()[j];
          for (int l = 0; l < q0; ++l, ++group) {
            // D_1 phi = Re(f), D_2 phi = -Im(f), f = alpha c e^{i(alpha-1)(theta+2 pi l)}
            const Complex rot = std::polar(alpha, (alpha - 1.0) * (theta + kTwoPi * l));
            double d1 = 0.0, d2 = 0.0;
            for (int k = 0; k < m; ++k) {
              const Complex f = comp.coeff[k] * rot;
              const double wk = groups[group * m + k];
              d1 += wk * f.real();
              d2 -= wk * f.imag();
            }
            acc1 += comp.multiplicity * r1a * d1;
            acc2 += comp.multiplicity * r1a * d2;
          }
        }
      }
      // (pi q0)^{-1} int_0^{2pi} ... dtheta, then averaged over the r window
      W1 += acc1 * kTwoPi / opts.n_theta / (std::numbers::pi * q0);
      W2 += acc2 * kTwoPi / opts.n_theta / (std::numbers::pi * q0);
    }
    W1 /= opts.n_r;
    W2 /= opts.n_r;
    res.lambda.push_back({W1 / c_norm, W2 / c_norm});
  }

  // least-squares fit lambda(z) = A z (n-2 axis variables; scalar z here)
  if (n > 2) {
    double szz = 0.0, s1 = 0.0, s2 = 0.0;
    for (size_t i = 0; i < res.slices.size(); ++i) {
      szz += sq(res.slices[i]);
      s1 += res.lambda[i][0] * res.slices[i];
      s2 += res.lambda[i][1] * res.slices[i];
    }
    if (szz > 0.0)
      res.tilt = {s1 / szz, s2 / szz};
    else
      res.tilt = {0.0, 0.0};
  }
  return res;
}

ExcessReport decay_report(const QField& u, const std::array<double, 3>& center,
                          double theta, int levels, const TangentStructure& structure,
                          const DecayOptions& opts) {
  if (!(theta > 0.0 && theta < 1.0))
    throw std::invalid_argument("decay_report: theta in (0,1)");
  if (levels < 1) throw std::invalid_argument("decay_report: need at least one level");
  const GridSpec& g = u.grid();
  const double alpha = static_cast<double>(structure.k0) / structure.q0;
  const double finest = std::pow(theta, levels);
  if (finest < 8.0 * g.h)
    throw std::invalid_argument("decay_report: finest scale below the resolution floor (8h)");

  ExcessReport rep;
  rep.center = center;
  rep.theta = theta;
  rep.alpha = alpha;

  std::vector<CoeffVec> prev_canon;
  double prev_eta = 0.0, prev_rho = 0.0;
  std::vector<std::vector<CoeffVec>> original_coeffs;

  for (int j = 0; j <= levels; ++j) {
    const double rho = std::pow(theta, j);
    const double mass = l2_sq_ball(u, BallSpec{center, rho});
    if (mass <= 0.0) throw std::runtime_error("decay_report: zero mass at scale");
    const double eta = std::pow(rho, -g.n / 2.0) * std::sqrt(mass);

    FitOptions fo = opts.fit;
    if (!prev_canon.empty()) {
      // continuity init: coefficients of the previous scale, rescaled
      std::vector<CoeffVec> init = prev_canon;
      const double factor = std::pow(theta, alpha) * prev_eta / eta;
      for (auto& cv : init)
        for (auto& x : cv) x *= factor;
      fo.init_coeffs = init;
    }
    QField v = rescale(u, center, rho, opts.rescale_nodes);
    FitResult fit = fit_tangent(v, structure, fo);

    ScaleEntry entry;
    entry.scale = rho;
    entry.excess_hat = std::pow(rho, -alpha) * eta * fit.excess;
    entry.exact = entry.excess_hat < opts.exact_floor;
    // coefficients in the original field normalization
    entry.coeffs = fit.coeffs;
    const double unnormalize = eta / std::pow(rho, alpha);
    for (auto& cv : entry.coeffs)
      for (auto& x : cv) x *= unnormalize;
    original_coeffs.push_back(entry.coeffs);
    rep.scales.push_back(entry);

    prev_canon = fit.coeffs;
    prev_eta = eta;
    prev_rho = rho;
  }

  // mu from the log-log least squares over usable scales
  std::vector<double> lx, ly;
  for (const auto& e : rep.scales)
    if (!e.exact) {
      lx.push_back(std::log(e.scale));
      ly.push_back(std::log(e.excess_hat));
    }
  if (lx.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n_pts = static_cast<double>(lx.size());
    for (size_t i = 0; i < lx.size(); ++i) {
      sx += lx[i];
      sy += ly[i];
      sxx += lx[i] * lx[i];
      sxy += lx[i] * ly[i];
    }
    const double det = n_pts * sxx - sx * sx;
    if (det > 0) {
      rep.mu_fit = (n_pts * sxy - sx * sy) / det;
      const double icept = (sy * sxx - sx * sxy) / det;
      for (size_t i = 0; i < lx.size(); ++i)
        rep.fit_residual =
            std::max(rep.fit_residual, std::abs(ly[i] - icept - rep.mu_fit * lx[i]));
      rep.mu_defined = true;
    }
  }
  if (!rep.mu_defined)
    rep.status = lx.empty() ? "exact tangent" : "insufficient scales";

  // coefficient drift between the two finest scales, gauge aligned
  if (original_coeffs.size() >= 2) {
    const auto& a = original_coeffs[original_coeffs.size() - 2];
    const auto& b = original_coeffs.back();
    if (static_cast<int>(a.size()) <= 4 && structure.q0 <= 4)
      rep.coeff_drift_finest = std::sqrt(gauge_distance_sq(a, b, structure.q0));
    else {
      double s = 0.0;
      for (size_t j = 0; j < a.size(); ++j)
        for (size_t k = 0; k < a[j].size(); ++k) s += std::norm(a[j][k] - b[j][k]);
      rep.coeff_drift_finest = std::sqrt(s);
    }
  }
  return rep;
}

namespace {

template <typename WeightFn>
double weighted_excess_sum(const QField& u, const QField& phi_sampled,
                           const WeightFn& weight) {
  if (u.grid() != phi_sampled.grid() || u.q() != phi_sampled.q() ||
      u.m() != phi_sampled.m())
    throw std::invalid_argument("weighted excess: fields must share grid and shape");
  const GridSpec& g = u.grid();
  const double cell = std::pow(g.h, g.n);
  std::vector<double> terms(u.node_count(), 0.0);
  parallel_for(0, u.node_count(), [&](int64_t i) {
    auto idx = g.unflatten(i);
    auto pos = g.position(std::span<const int>(idx.data(), g.n));
    const double w = weight(pos);
    if (w == 0.0) return;
    terms[i] =
        w * cell * tuple_metric_sq(u.values(i), phi_sampled.values(i), u.q(), u.m());
  });
  return pairwise_sum(terms);
}

}  // namespace

double weighted_excess_radial(const QField& u, const QField& phi_sampled,
                              const std::array<double, 3>& center, double alpha,
                              double sigma, double gamma, double r_min) {
  const int n = u.grid().n;
  return weighted_excess_sum(u, phi_sampled, [&](const std::array<double, 3>& pos) {
    double d2 = 0.0;
    for (int a = 0; a < n; ++a) d2 += sq(pos[a] - center[a]);
    const double R = std::sqrt(d2);
    if (R < r_min || R > gamma) return 0.0;
    return std::pow(R, -n - 2.0 * alpha + sigma);
  });
}

double weighted_excess_axis(const QField& u, const QField& phi_sampled,
                            double delta, double sigma) {
  const int n = u.grid().n;
  const int q = u.q();
  return weighted_excess_sum(u, phi_sampled, [&](const std::array<double, 3>& pos) {
    double d2 = 0.0;
    for (int a = 0; a < n; ++a) d2 += sq(pos[a]);
    if (d2 > 0.25) return 0.0;
    const double r_delta = std::max(std::hypot(pos[0], pos[1]), delta);
    return std::pow(r_delta, -(2.0 / q - sigma));
  });
}

void write_excess_report(const ExcessReport& rep, std::ostream& out) {
  char buf[256];
  out << "excess-report\n";
  std::snprintf(buf, sizeof(buf), "center %.17g %.17g %.17g\n", rep.center[0],
                rep.center[1], rep.center[2]);
  out << buf;
  std::snprintf(buf, sizeof(buf), "theta %.17g\nalpha %.17g\nstatus %s\n", rep.theta,
                rep.alpha, rep.status.c_str());
  out << buf;
  if (rep.mu_defined) {
    std::snprintf(buf, sizeof(buf), "mu_fit %.17g\nfit_residual %.17g\n", rep.mu_fit,
                  rep.fit_residual);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "coeff_drift_finest %.17g\n", rep.coeff_drift_finest);
  out << buf;
  for (const auto& e : rep.scales) {
    std::snprintf(buf, sizeof(buf), "scale %.17g excess %.17g%s\n", e.scale,
                  e.excess_hat, e.exact ? " exact" : "");
    out << buf;
    for (const auto& cv : e.coeffs) {
      out << "  coeff";
      for (const auto& x : cv) {
        std::snprintf(buf, sizeof(buf), " %.17g%+.17gi", x.real(), x.imag());
        out << buf;
      }
      out << "\n";
    }
  }
}

void write_excess_csv(const ExcessReport& rep, std::ostream& out) {
  out << "scale,excess,mu_running\n";
  char buf[128];
  double prev_scale = 0.0, prev_excess = 0.0;
  bool have_prev = false;
  for (const auto& e : rep.scales) {
    double mu_running = 0.0;
    if (have_prev && e.excess_hat > 0.0 && prev_excess > 0.0)
      mu_running = std::log(e.excess_hat / prev_excess) / std::log(e.scale / prev_scale);
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", e.scale, e.excess_hat,
                  mu_running);
    out << buf;
    prev_scale = e.scale;
    prev_excess = e.excess_hat;
    have_prev = true;
  }
}

}  // namespace qval
