#include "qval/cylindrical.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace qval {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

int gcd_int(int a, int b) { return std::gcd(a, b); }

// e^A by scaling and squaring with a Taylor series; A is small and skew.
std::vector<double> expm(const std::vector<double>& a, int n) {
  double max_abs = 0.0;
  for (double x : a) max_abs = std::max(max_abs, std::abs(x));
  int squarings = 0;
  double scale = 1.0;
  while (max_abs * scale > 0.5) {
    scale *= 0.5;
    ++squarings;
  }
  std::vector<double> as(a);
  for (double& x : as) x *= scale;

  auto matmul = [n](const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> z(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) {
        double xik = x[i * n + k];
        if (xik == 0.0) continue;
        for (int j = 0; j < n; ++j) z[i * n + j] += xik * y[k * n + j];
      }
    return z;
  };

  std::vector<double> result(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) result[i * n + i] = 1.0;
  std::vector<double> term = result;
  for (int k = 1; k <= 16; ++k) {
    term = matmul(term, as);
    for (double& x : term) x /= k;
    for (size_t i = 0; i < result.size(); ++i) result[i] += term[i];
  }
  for (int s = 0; s < squarings; ++s) result = matmul(result, result);
  return result;
}

}  // namespace

CylindricalFunction::CylindricalFunction(int q, int m, int k0, int q0,
                                         std::vector<CylComponent> components,
                                         int n, std::vector<double> rotation)
    : q_(q), m_(m), k0_(k0), q0_(q0), n_(n), components_(std::move(components)),
      rotation_(std::move(rotation)) {
  if (q_ < 1 || m_ < 1 || n_ < 2) throw std::invalid_argument("cylindrical: bad q, m or n");
  if (k0_ < 1 || q0_ < 1 || q0_ > q_) throw std::invalid_argument("cylindrical: need 1 <= q0 <= q, k0 >= 1");
  if (gcd_int(k0_, q0_) != 1) throw std::invalid_argument("cylindrical: k0, q0 must be relatively prime");
  if (components_.empty()) throw std::invalid_argument("cylindrical: no components");
  int total = 0, zeros = 0;
  for (const auto& c : components_) {
    if (c.multiplicity < 1) throw std::invalid_argument("cylindrical: multiplicity must be positive");
    if (c.zero) {
      ++zeros;
      total += c.multiplicity;
    } else {
      if (static_cast<int>(c.coeff.size()) != m_)
        throw std::invalid_argument("cylindrical: coefficient dimension != m");
      total += c.multiplicity * q0_;
    }
  }
  if (zeros > 1) throw std::invalid_argument("cylindrical: more than one zero component");
  if (total != q_) throw std::invalid_argument("cylindrical: multiplicities do not sum to q");

  if (!rotation_.empty()) {
    if (rotation_.size() != static_cast<size_t>(n_) * n_)
      throw std::invalid_argument("cylindrical: rotation generator must be n x n");
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) {
        double aij = rotation_[i * n_ + j];
        if (std::abs(aij + rotation_[j * n_ + i]) > 1e-14)
          throw std::invalid_argument("cylindrical: rotation generator not skew");
        bool allowed = (i < 2 && j >= 2) || (i >= 2 && j < 2);
        if (!allowed && aij != 0.0)
          throw std::invalid_argument("cylindrical: generator must mix {1,2} with the axis only");
        if (aij != 0.0) has_rotation_ = true;
      }
    if (has_rotation_) rot_mat_ = expm(rotation_, n_);
  }

  for (int j = 0; j < static_cast<int>(components_.size()); ++j) {
    const auto& c = components_[j];
    if (c.zero) {
      for (int r = 0; r < c.multiplicity; ++r) {
        slot_component_.push_back(j);
        slot_branch_.push_back(-1);
      }
    } else {
      for (int l = 0; l < q0_; ++l)
        for (int r = 0; r < c.multiplicity; ++r) {
          slot_component_.push_back(j);
          slot_branch_.push_back(l);
        }
    }
  }
}

void CylindricalFunction::polar(std::span<const double> X, double& r, double& theta) const {
  if (static_cast<int>(X.size()) != n_)
    throw std::invalid_argument("cylindrical: evaluation point has wrong dimension");
  double x1 = X[0], x2 = X[1];
  if (has_rotation_) {
    x1 = 0.0;
    x2 = 0.0;
    for (int j = 0; j < n_; ++j) {
      x1 += rot_mat_[0 * n_ + j] * X[j];
      x2 += rot_mat_[1 * n_ + j] * X[j];
    }
  }
  r = std::hypot(x1, x2);
  theta = std::atan2(x2, x1);
  if (theta < 0.0) theta += kTwoPi;
}

void CylindricalFunction::slot_values(double r, double theta, std::vector<double>& out) const {
  out.assign(static_cast<size_t>(q_) * m_, 0.0);
  if (r == 0.0) return;  // alpha > 0 forces every branch to 0 on the axis
  const double alpha_ = alpha();
  const double ralpha = std::pow(r, alpha_);
  size_t slot = 0;
  for (const auto& comp : components_) {
    if (comp.zero) {
      slot += comp.multiplicity;
      continue;
    }
    for (int l = 0; l < q0_; ++l) {
      const double phase = alpha_ * (theta + kTwoPi * l);
      const Complex w = std::polar(ralpha, phase);
      for (int rep = 0; rep < comp.multiplicity; ++rep) {
        for (int k = 0; k < m_; ++k)
          out[slot * m_ + k] = (comp.coeff[k] * w).real();
        ++slot;
      }
    }
  }
}

AqPoint CylindricalFunction::eval(std::span<const double> X) const {
  double r, theta;
  polar(X, r, theta);
  std::vector<double> flat;
  slot_values(r, theta, flat);
  return AqPoint(q_, m_, std::move(flat));
}

double circle_distance_sq(const CylindricalFunction& phi,
                          const CylindricalFunction& psi, int n_theta) {
  if (phi.q() != psi.q() || phi.m() != psi.m() || phi.k0() != psi.k0() ||
      phi.q0() != psi.q0())
    throw std::invalid_argument("circle_distance_sq: mismatched structure");
  double total = 0.0;
  std::vector<double> X(std::max(phi.n(), 2), 0.0);
  for (int t = 0; t < n_theta; ++t) {
    double theta = kTwoPi * t / n_theta;
    X[0] = std::cos(theta);
    X[1] = std::sin(theta);
    total += metric_sq(phi.eval(std::span<const double>(X.data(), phi.n())),
                       psi.eval(std::span<const double>(X.data(), psi.n())));
  }
  return total * kTwoPi / n_theta;
}

namespace {

double coeff_dist_sq(const std::vector<CoeffVec>& a, const std::vector<CoeffVec>& b,
                     const std::vector<int>& sigma, const std::vector<int>& phases,
                     int q0) {
  double s = 0.0;
  for (size_t j = 0; j < a.size(); ++j) {
    const Complex rot = std::polar(1.0, kTwoPi * phases[j] / q0);
    const CoeffVec& bj = b[sigma[j]];
    for (size_t k = 0; k < a[j].size(); ++k) s += std::norm(a[j][k] - rot * bj[k]);
  }
  return s;
}

}  // namespace

GaugeResult canonical_gauge(const std::vector<CoeffVec>& a,
                            const std::vector<CoeffVec>& b, int q0) {
  const int N = static_cast<int>(a.size());
  if (N == 0 || b.size() != a.size())
    throw std::invalid_argument("canonical_gauge: coefficient lists must be nonempty and equal length");
  if (N > 4 || q0 > 4)
    throw std::invalid_argument("canonical_gauge: exhaustive search bounded by N <= 4, q0 <= 4");
  for (const auto& v : a)
    if (v.size() != a[0].size()) throw std::invalid_argument("canonical_gauge: ragged coefficients");

  std::vector<int> sigma(N), best_sigma(N), phases(N, 0), best_phases(N, 0);
  std::iota(sigma.begin(), sigma.end(), 0);
  best_sigma = sigma;
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> perm(sigma);
  do {
    std::vector<int> ph(N, 0);
    while (true) {
      double c = coeff_dist_sq(a, b, perm, ph, q0);
      if (c < best) {
        best = c;
        best_sigma = perm;
        best_phases = ph;
      }
      int d = 0;
      while (d < N && ++ph[d] == q0) ph[d++] = 0;
      if (d == N) break;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  GaugeResult result;
  result.cost = best;
  result.coeffs.resize(N);
  for (int j = 0; j < N; ++j) {
    const Complex rot = std::polar(1.0, kTwoPi * best_phases[j] / q0);
    CoeffVec v = b[best_sigma[j]];
    for (auto& x : v) x *= rot;
    result.coeffs[j] = std::move(v);
  }
  return result;
}

double gauge_distance_sq(const std::vector<CoeffVec>& a,
                         const std::vector<CoeffVec>& b, int q0) {
  return canonical_gauge(a, b, q0).cost;
}

std::vector<CoeffVec> canonical_coeffs(const std::vector<CoeffVec>& coeffs, int q0) {
  // Per coefficient, pick the branch phase giving the lexicographically
  // largest (Re, Im)-interleaved vector; then sort the list.
  std::vector<CoeffVec> out = coeffs;
  for (auto& c : out) {
    CoeffVec best = c;
    for (int l = 1; l < q0; ++l) {
      const Complex rot = std::polar(1.0, kTwoPi * l / q0);
      CoeffVec cand(c.size());
      for (size_t k = 0; k < c.size(); ++k) cand[k] = rot * c[k];
      auto key = [](const CoeffVec& v) {
        std::vector<double> flat;
        flat.reserve(2 * v.size());
        for (auto x : v) {
          flat.push_back(x.real());
          flat.push_back(x.imag());
        }
        return flat;
      };
      if (key(cand) > key(best)) best = cand;
    }
    c = std::move(best);
  }
  std::sort(out.begin(), out.end(), [](const CoeffVec& x, const CoeffVec& y) {
    for (size_t k = 0; k < std::min(x.size(), y.size()); ++k) {
      if (x[k].real() != y[k].real()) return x[k].real() < y[k].real();
      if (x[k].imag() != y[k].imag()) return x[k].imag() < y[k].imag();
    }
    return x.size() < y.size();
  });
  return out;
}

Complex micallef_white_gamma(const CoeffVec& c) {
  Complex g = 0.0;
  for (const Complex& ck : c) g += ck * ck;
  return g;
}

double inner_variation_residual_closed(const CoeffVec& c,
                                       std::span<const double, 2> zeta0) {
  const Complex g = micallef_white_gamma(c);
  return -(std::numbers::pi / 2.0) * (g.real() * zeta0[0] - g.imag() * zeta0[1]);
}

PlaneVectorField bump_field(std::array<double, 2> zeta0, double radius) {
  const double R2 = radius * radius;
  PlaneVectorField f;
  f.value = [zeta0, R2](double x1, double x2) -> std::array<double, 2> {
    double s = x1 * x1 + x2 * x2;
    if (s >= R2) return {0.0, 0.0};
    double g = 1.0 - s / R2;
    double g3 = g * g * g;
    return {zeta0[0] * g3, zeta0[1] * g3};
  };
  f.jacobian = [zeta0, R2](double x1, double x2) -> std::array<double, 4> {
    double s = x1 * x1 + x2 * x2;
    if (s >= R2) return {0.0, 0.0, 0.0, 0.0};
    double g = 1.0 - s / R2;
    double gp = 3.0 * g * g * (-2.0 / R2);
    return {zeta0[0] * gp * x1, zeta0[0] * gp * x2,
            zeta0[1] * gp * x1, zeta0[1] * gp * x2};
  };
  return f;
}

InnerVariationResult inner_variation_residual_numeric(
    const CoeffVec& c, const PlaneVectorField& zeta, std::vector<double> eps,
    int n_r, int n_theta, double spread_tol) {
  if (eps.empty()) throw std::invalid_argument("inner variation: need at least one eps");
  std::sort(eps.begin(), eps.end(), std::greater<>());
  const size_t m = c.size();

  auto annulus_integral = [&](double e) {
    double total = 0.0;
    for (int ti = 0; ti < n_theta; ++ti) {
      double theta = kTwoPi * (ti + 0.5) / n_theta;
      double ct = std::cos(theta), st = std::sin(theta);
      double partial = 0.0;
      for (int ri = 0; ri < n_r; ++ri) {
        double r = e + (1.0 - e) * (ri + 0.5) / n_r;
        // Dw for w = Re(c z^{1/2}): D1 w = Re(f), D2 w = -Im(f), f = c z^{-1/2}/2.
        const Complex zinv_half = std::polar(0.5 / std::sqrt(r), -theta / 2.0);
        double g11 = 0.0, g22 = 0.0, g12 = 0.0;
        for (size_t k = 0; k < m; ++k) {
          const Complex f = c[k] * zinv_half;
          g11 += f.real() * f.real();
          g22 += f.imag() * f.imag();
          g12 -= f.real() * f.imag();
        }
        const auto J = zeta.jacobian(r * ct, r * st);
        const double div = J[0] + J[3];
        const double pair = g11 * J[0] + g12 * J[2] + g12 * J[1] + g22 * J[3];
        partial += ((g11 + g22) * div - 2.0 * pair) * r;
      }
      total += partial * (1.0 - e) / n_r;
    }
    // first variation of energy under X -> X + t zeta(X)
    return -total * kTwoPi / n_theta;
  };

  InnerVariationResult res;
  for (double e : eps) res.per_eps.push_back(annulus_integral(e));

  if (eps.size() == 1) {
    res.value = res.per_eps[0];
    return res;
  }
  // least-squares fit v(eps) = v0 + a eps^2
  double s0 = 0, s2 = 0, s4 = 0, sv = 0, s2v = 0;
  for (size_t i = 0; i < eps.size(); ++i) {
    double e2 = eps[i] * eps[i];
    s0 += 1.0;
    s2 += e2;
    s4 += e2 * e2;
    sv += res.per_eps[i];
    s2v += e2 * res.per_eps[i];
  }
  double det = s0 * s4 - s2 * s2;
  double v0 = (s4 * sv - s2 * s2v) / det;
  double slope = (s0 * s2v - s2 * sv) / det;
  res.value = v0;
  for (size_t i = 0; i < eps.size(); ++i)
    res.spread = std::max(res.spread,
                          std::abs(res.per_eps[i] - (v0 + slope * eps[i] * eps[i])));
  res.converged = res.spread <= spread_tol * std::max(1.0, std::abs(v0));
  return res;
}

std::function<AqPoint(std::span<const double>)> example_uk(int q, double k) {
  if (q < 2) throw std::invalid_argument("example_uk: q >= 2 required");
  return [q, k](std::span<const double> X) {
    const Complex z(X[0], X.size() > 1 ? X[1] : 0.0);
    Complex zq = 1.0;
    for (int i = 0; i < q; ++i) zq *= z;
    const Complex w = zq - 1.0 / k;
    std::vector<double> flat(static_cast<size_t>(q) * 2, 0.0);
    if (w != Complex(0.0, 0.0)) {
      const double rho = std::pow(std::abs(w), 1.0 / q);
      const double psi = std::arg(w);
      for (int j = 0; j < q; ++j) {
        const Complex root = std::polar(rho, (psi + kTwoPi * j) / q);
        flat[2 * j] = root.real();
        flat[2 * j + 1] = root.imag();
      }
    }
    return AqPoint(q, 2, std::move(flat));
  };
}

namespace {

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

std::string CylindricalFunction::to_record() const {
  std::ostringstream out;
  out << "CYLF1\n";
  out << "q " << q_ << "\nm " << m_ << "\nk0 " << k0_ << "\nq0 " << q0_ << "\nn " << n_ << "\n";
  out << "components " << components_.size() << "\n";
  for (const auto& c : components_) {
    if (c.zero) {
      out << "zero " << c.multiplicity << "\n";
    } else {
      out << "comp " << c.multiplicity;
      for (const auto& x : c.coeff) out << " " << fmt_double(x.real());
      for (const auto& x : c.coeff) out << " " << fmt_double(x.imag());
      out << "\n";
    }
  }
  out << "rotation";
  if (has_rotation_)
    for (double x : rotation_) out << " " << fmt_double(x);
  out << "\nend\n";
  return out.str();
}

CylindricalFunction CylindricalFunction::from_record(std::istream& in) {
  std::string tag;
  in >> tag;
  if (tag != "CYLF1") throw std::runtime_error("cylindrical record: bad magic");
  int q = 0, m = 0, k0 = 0, q0 = 0, n = 2;
  size_t ncomp = 0;
  auto expect = [&in](const std::string& key) {
    std::string s;
    in >> s;
    if (s != key) throw std::runtime_error("cylindrical record: expected '" + key + "', got '" + s + "'");
  };
  expect("q");
  in >> q;
  expect("m");
  in >> m;
  expect("k0");
  in >> k0;
  expect("q0");
  in >> q0;
  expect("n");
  in >> n;
  expect("components");
  in >> ncomp;
  std::vector<CylComponent> comps;
  for (size_t i = 0; i < ncomp; ++i) {
    std::string kind;
    in >> kind;
    CylComponent c;
    in >> c.multiplicity;
    if (kind == "zero") {
      c.zero = true;
    } else if (kind == "comp") {
      std::vector<double> re(m), im(m);
      for (auto& x : re) in >> x;
      for (auto& x : im) in >> x;
      c.coeff.resize(m);
      for (int k = 0; k < m; ++k) c.coeff[k] = Complex(re[k], im[k]);
    } else {
      throw std::runtime_error("cylindrical record: unknown component kind '" + kind + "'");
    }
    comps.push_back(std::move(c));
  }
  expect("rotation");
  std::vector<double> rot;
  std::string tok;
  while (in >> tok && tok != "end") rot.push_back(std::stod(tok));
  if (tok != "end") throw std::runtime_error("cylindrical record: missing end");
  if (!rot.empty() && rot.size() != static_cast<size_t>(n) * n)
    throw std::runtime_error("cylindrical record: rotation entry count");
  return CylindricalFunction(q, m, k0, q0, std::move(comps), n, std::move(rot));
}

CylindricalFunction CylindricalFunction::from_record_string(const std::string& text) {
  std::istringstream in(text);
  return from_record(in);
}

}  // namespace qval
