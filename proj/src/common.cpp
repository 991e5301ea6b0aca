#include "trapscope/common.hpp"

#include <omp.h>

#include <algorithm>

namespace trapscope {

int thread_count() { return std::max(1, omp_get_max_threads()); }

void set_thread_count(int n) { omp_set_num_threads(std::max(1, n)); }

}  // namespace trapscope
