#pragma once

#include <span>
#include <utility>
#include <vector>

namespace qval {

// One value of a q-valued function: an unordered q-tuple of points in R^m.
// Stored canonically (values sorted lexicographically by coordinates), so
// equal multisets have identical representations.
class AqPoint {
 public:
  // flat holds q*m doubles, value-major.  Canonicalizes on construction.
  AqPoint(int q, int m, std::vector<double> flat);

  static AqPoint from_values(const std::vector<std::vector<double>>& values);
  // q copies of the origin of R^m.
  static AqPoint zero(int q, int m);

  int q() const { return q_; }
  int m() const { return m_; }
  std::span<const double> value(int j) const {
    return {flat_.data() + static_cast<size_t>(j) * m_, static_cast<size_t>(m_)};
  }
  const std::vector<double>& flat() const { return flat_; }

  bool operator==(const AqPoint& other) const = default;

 private:
  int q_;
  int m_;
  std::vector<double> flat_;
};

// Optimal-matching metric G(a,b) = min over permutations of the
// root-sum-square pairing cost.  Exact optimum.
double metric(const AqPoint& a, const AqPoint& b);
double metric_sq(const AqPoint& a, const AqPoint& b);

// The permutation realizing metric_sq: b's value matched to a's j-th value
// is b.value(perm[j]).
std::vector<int> optimal_matching(const AqPoint& a, const AqPoint& b);

// |a| = G(a, q[[0]]).
double norm(const AqPoint& a);

// Minimum distance between distinct values; +infinity when all values
// coincide (including q = 1).  tol > 0 groups values within tol as equal.
double separation(const AqPoint& a, double tol = 0.0);

std::vector<double> average(const AqPoint& a);
AqPoint average_free(const AqPoint& a);

AqPoint scalar_mul(double lambda, const AqPoint& a);
// Adds the vector v to every value.
AqPoint translate(const AqPoint& a, std::span<const double> v);

// Sum of points with multiplicities: q = sum of mult_j * q_j.
AqPoint concat_sum(const std::vector<std::pair<int, AqPoint>>& parts);

// In-place canonical (lexicographic) ordering of a raw q*m tuple.
void canonicalize_tuple(std::span<double> flat, int q, int m);

}  // namespace qval
