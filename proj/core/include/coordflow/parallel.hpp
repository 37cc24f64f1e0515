#pragma once

#include <cstdint>
#include <functional>

namespace coordflow {

// Worker cap for frame-level parallel loops (weight map, rendering, io).
// Tensor kernels stay serial, so results are identical at every setting.
void set_num_threads(int n);  // n <= 0 -> hardware default
int num_threads();

// Splits [0,n) into contiguous chunks, one worker each. Deterministic
// partitioning for a given (n, num_threads()).
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body);

}  // namespace coordflow
