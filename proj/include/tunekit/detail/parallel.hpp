#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace tunekit::detail {

// Work is split into fixed-size blocks regardless of the worker count, so
// per-block results can be folded in block order and floating-point output
// stays identical for any number of workers.
inline constexpr std::size_t kParallelBlock = 4096;

inline unsigned resolve_workers(unsigned requested) {
  if (requested != 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

inline std::size_t block_count(std::size_t n) {
  return (n + kParallelBlock - 1) / kParallelBlock;
}

// fn(block_index, begin, end). Blocks are claimed via an atomic counter.
template <class Fn>
void for_blocks(std::size_t n, unsigned workers, Fn&& fn) {
  const std::size_t blocks = block_count(n);
  if (blocks == 0) return;
  workers = resolve_workers(workers);
  if (workers <= 1 || blocks == 1) {
    for (std::size_t b = 0; b < blocks; ++b) {
      std::size_t begin = b * kParallelBlock;
      fn(b, begin, std::min(n, begin + kParallelBlock));
    }
    return;
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (;;) {
      std::size_t b = next.fetch_add(1, std::memory_order_relaxed);
      if (b >= blocks || failed.load(std::memory_order_relaxed)) return;
      try {
        std::size_t begin = b * kParallelBlock;
        fn(b, begin, std::min(n, begin + kParallelBlock));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  unsigned spawn = static_cast<unsigned>(std::min<std::size_t>(workers, blocks));
  pool.reserve(spawn);
  for (unsigned t = 0; t < spawn; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace tunekit::detail
