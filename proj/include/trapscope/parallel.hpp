#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <vector>

#include "trapscope/common.hpp"

namespace trapscope {

/// Runs body(i) for i in [0, n). With Exec::parallel the iterations are
/// spread over OpenMP threads with a static schedule. Exceptions are caught
/// per iteration and the one with the lowest index is rethrown, so error
/// reporting does not depend on thread timing.
template <class Body>
void for_each_index(std::size_t n, Exec exec, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::int64_t>(n);
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < count; ++i) {
      try {
        body(static_cast<std::size_t>(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  } else {
    for (std::int64_t i = 0; i < count; ++i) {
      try {
        body(static_cast<std::size_t>(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Sums per-block integer counts. Blocks are fixed-size so the partition,
/// and hence the result, is independent of the worker count.
template <class Block>
std::uint64_t count_in_blocks(std::uint64_t n, std::uint64_t block_size,
                              Exec exec, Block&& block) {
  const std::uint64_t blocks = (n + block_size - 1) / block_size;
  std::vector<std::uint64_t> partial(blocks, 0);
  for_each_index(blocks, exec, [&](std::size_t b) {
    const std::uint64_t begin = b * block_size;
    const std::uint64_t end = begin + block_size < n ? begin + block_size : n;
    partial[b] = block(begin, end);
  });
  std::uint64_t total = 0;
  for (auto c : partial) total += c;
  return total;
}

}  // namespace trapscope
