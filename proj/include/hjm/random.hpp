#ifndef HJM_RANDOM_HPP
#define HJM_RANDOM_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

namespace hjm {

using Rng = std::mt19937_64;

// Independent stream for (seed, stream); used per path so results do not
// depend on thread scheduling.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

// Runs body(i) for i in [0, count) on up to `threads` workers, contiguous
// chunks per worker. threads == 0 means hardware concurrency.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body);

// Global default used when callers pass threads == 0.
void set_default_threads(std::size_t threads);
std::size_t default_threads();

} // namespace hjm

#endif
