#pragma once

#include <cstdint>
#include <functional>
#include <span>

namespace qval {

// Global worker count (1 = serial).  Thread count never changes results:
// work items are independent and reductions run in a fixed order.
void set_thread_count(int count);
int thread_count();

// Applies fn to every index in [begin, end), statically chunked.
void parallel_for(int64_t begin, int64_t end,
                  const std::function<void(int64_t)>& fn);

// Deterministic pairwise tree reduction.
double pairwise_sum(std::span<const double> values);

}  // namespace qval
