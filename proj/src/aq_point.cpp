#include "qval/aq_point.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "qval/assignment.hpp"

namespace qval {

void canonicalize_tuple(std::span<double> flat, int q, int m) {
  // insertion sort of values by lexicographic coordinate order; q is small
  for (int i = 1; i < q; ++i) {
    for (int j = i; j > 0; --j) {
      double* a = flat.data() + (j - 1) * m;
      double* b = flat.data() + static_cast<size_t>(j) * m;
      if (std::lexicographical_compare(b, b + m, a, a + m))
        std::swap_ranges(a, a + m, b);
      else
        break;
    }
  }
}

namespace {

double dist_sq(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t k = 0; k < a.size(); ++k) {
    double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

}  // namespace

AqPoint::AqPoint(int q, int m, std::vector<double> flat) : q_(q), m_(m), flat_(std::move(flat)) {
  if (q_ < 1 || m_ < 1) throw std::invalid_argument("AqPoint: q and m must be positive");
  if (flat_.size() != static_cast<size_t>(q_) * m_)
    throw std::invalid_argument("AqPoint: expected q*m coordinates");
  for (double x : flat_)
    if (!std::isfinite(x)) throw std::invalid_argument("AqPoint: non-finite coordinate");
  canonicalize_tuple(flat_, q_, m_);
}

AqPoint AqPoint::from_values(const std::vector<std::vector<double>>& values) {
  if (values.empty()) throw std::invalid_argument("AqPoint: empty value list");
  const size_t m = values[0].size();
  std::vector<double> flat;
  flat.reserve(values.size() * m);
  for (const auto& v : values) {
    if (v.size() != m) throw std::invalid_argument("AqPoint: inconsistent dimensions");
    flat.insert(flat.end(), v.begin(), v.end());
  }
  return AqPoint(static_cast<int>(values.size()), static_cast<int>(m), std::move(flat));
}

AqPoint AqPoint::zero(int q, int m) {
  return AqPoint(q, m, std::vector<double>(static_cast<size_t>(q) * m, 0.0));
}

std::vector<int> optimal_matching(const AqPoint& a, const AqPoint& b) {
  if (a.q() != b.q() || a.m() != b.m())
    throw std::invalid_argument("metric: mismatched q or m");
  const int q = a.q();
  std::vector<double> cost(static_cast<size_t>(q) * q);
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j) cost[i * q + j] = dist_sq(a.value(i), b.value(j));
  return min_cost_assignment(cost, q);
}

double metric_sq(const AqPoint& a, const AqPoint& b) {
  // fixed evaluation order so that symmetry is exact in floating point
  const bool swap = std::lexicographical_compare(b.flat().begin(), b.flat().end(),
                                                 a.flat().begin(), a.flat().end());
  const AqPoint& x = swap ? b : a;
  const AqPoint& y = swap ? a : b;
  auto perm = optimal_matching(x, y);
  double s = 0.0;
  for (int j = 0; j < x.q(); ++j) s += dist_sq(x.value(j), y.value(perm[j]));
  return s;
}

double metric(const AqPoint& a, const AqPoint& b) { return std::sqrt(metric_sq(a, b)); }

double norm(const AqPoint& a) {
  double s = 0.0;
  for (double x : a.flat()) s += x * x;
  return std::sqrt(s);
}

double separation(const AqPoint& a, double tol) {
  double min_dist = std::numeric_limits<double>::infinity();
  for (int i = 0; i < a.q(); ++i)
    for (int j = i + 1; j < a.q(); ++j) {
      double d = std::sqrt(dist_sq(a.value(i), a.value(j)));
      if (d > tol && d < min_dist) min_dist = d;
    }
  return min_dist;  // +inf when all values coincide (within tol)
}

std::vector<double> average(const AqPoint& a) {
  std::vector<double> avg(a.m(), 0.0);
  for (int j = 0; j < a.q(); ++j) {
    auto v = a.value(j);
    for (int k = 0; k < a.m(); ++k) avg[k] += v[k];
  }
  for (double& x : avg) x /= a.q();
  return avg;
}

AqPoint average_free(const AqPoint& a) {
  auto avg = average(a);
  std::vector<double> flat = a.flat();
  for (int j = 0; j < a.q(); ++j)
    for (int k = 0; k < a.m(); ++k) flat[j * a.m() + k] -= avg[k];
  return AqPoint(a.q(), a.m(), std::move(flat));
}

AqPoint scalar_mul(double lambda, const AqPoint& a) {
  std::vector<double> flat = a.flat();
  for (double& x : flat) x *= lambda;
  return AqPoint(a.q(), a.m(), std::move(flat));
}

AqPoint translate(const AqPoint& a, std::span<const double> v) {
  if (static_cast<int>(v.size()) != a.m())
    throw std::invalid_argument("translate: dimension mismatch");
  std::vector<double> flat = a.flat();
  for (int j = 0; j < a.q(); ++j)
    for (int k = 0; k < a.m(); ++k) flat[j * a.m() + k] += v[k];
  return AqPoint(a.q(), a.m(), std::move(flat));
}

AqPoint concat_sum(const std::vector<std::pair<int, AqPoint>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_sum: empty part list");
  const int m = parts[0].second.m();
  int q = 0;
  for (const auto& [mult, p] : parts) {
    if (mult < 1) throw std::invalid_argument("concat_sum: multiplicity must be positive");
    if (p.m() != m) throw std::invalid_argument("concat_sum: inconsistent ambient dimension");
    q += mult * p.q();
  }
  std::vector<double> flat;
  flat.reserve(static_cast<size_t>(q) * m);
  for (const auto& [mult, p] : parts)
    for (int r = 0; r < mult; ++r) flat.insert(flat.end(), p.flat().begin(), p.flat().end());
  return AqPoint(q, m, std::move(flat));
}

}  // namespace qval
