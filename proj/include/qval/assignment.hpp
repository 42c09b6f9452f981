#pragma once

#include <span>
#include <vector>

namespace qval {

// Minimum-cost perfect matching on an n x n cost matrix (row-major).
// Returns perm with perm[i] = column matched to row i.
//
// Exhaustive search for n <= 6, Hungarian algorithm with potentials
// beyond that; both return an exact optimum.
std::vector<int> min_cost_assignment(std::span<const double> cost, int n);

double assignment_cost(std::span<const double> cost, int n,
                       std::span<const int> perm);

}  // namespace qval
