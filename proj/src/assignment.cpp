#include "qval/assignment.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace qval {

double assignment_cost(std::span<const double> cost, int n,
                       std::span<const int> perm) {
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += cost[i * n + perm[i]];
  return total;
}

namespace {

std::vector<int> exhaustive(std::span<const double> cost, int n) {
  std::vector<int> perm(n), best(n);
  std::iota(perm.begin(), perm.end(), 0);
  best = perm;
  double best_cost = assignment_cost(cost, n, perm);
  while (std::next_permutation(perm.begin(), perm.end())) {
    double c = assignment_cost(cost, n, perm);
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  }
  return best;
}

// Hungarian algorithm, O(n^3), with row/column potentials.
std::vector<int> hungarian(std::span<const double> cost, int n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, n);  // match[j] = row assigned to column j
  for (int i = 0; i < n; ++i) {
    std::vector<double> minv(n + 1, inf);
    std::vector<int> way(n + 1, n);
    std::vector<char> used(n + 1, false);
    int j0 = n;
    match[n] = i;
    do {
      used[j0] = true;
      int i0 = match[j0], j1 = n;
      double delta = inf;
      for (int j = 0; j < n; ++j) {
        if (used[j]) continue;
        double cur = cost[i0 * n + j] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != n);
    // augment along the alternating path
    while (j0 != n) {
      int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    }
  }
  std::vector<int> perm(n);
  for (int j = 0; j < n; ++j) perm[match[j]] = j;
  return perm;
}

}  // namespace

std::vector<int> min_cost_assignment(std::span<const double> cost, int n) {
  if (n <= 0) throw std::invalid_argument("assignment: empty cost matrix");
  if (static_cast<int>(cost.size()) != n * n)
    throw std::invalid_argument("assignment: cost matrix size mismatch");
  if (n <= 6) return exhaustive(cost, n);
  return hungarian(cost, n);
}

}  // namespace qval
