#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace funcox {

// Worker count: explicit request, else FUNCOX_THREADS, else hardware concurrency.
inline unsigned resolve_threads(unsigned requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("FUNCOX_THREADS")) {
    try {
      int v = std::stoi(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n). Work items are claimed dynamically but each
// item writes only its own output slot, so results never depend on schedule.
// The first exception thrown by any item is rethrown on the calling thread.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();
  if (first_error) std::rethrow_exception(first_error);
}

// Independent engine for stream `stream` of a seeded computation. Streams are
// keyed by (seed, purpose, index) so that parallel jobs draw the same numbers
// as a serial run.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

// Purpose tags for make_stream.
namespace stream_tag {
inline constexpr std::uint64_t cma_draws = 0x11;
inline constexpr std::uint64_t fpca_scores = 0x21;
inline constexpr std::uint64_t survival = 0x31;
inline constexpr std::uint64_t replicate = 0x41;
inline constexpr std::uint64_t demo = 0x51;
inline constexpr std::uint64_t source = 0x61;
}  // namespace stream_tag

// Child seed for replicate `index`, used to give each replicate of a study
// its own independent seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  auto eng = make_stream(seed, stream_tag::replicate, index);
  return eng();
}

}  // namespace funcox
