#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ctxprobe {

// Every generator in the toolkit is a 64-bit Mersenne Twister
// (std::mt19937_64). Seeds for sub-tasks are derived with a SplitMix64
// finalizer so that (master seed, task index) pairs give independent streams
// and results do not depend on which worker ran the task.
std::uint64_t mix_seed(std::uint64_t value) noexcept;
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  // Uniform integer in [lo, hi].
  std::size_t between(std::size_t lo, std::size_t hi);
  // Uniform real in [0, 1).
  double unit();
  double normal(double mean, double stddev);
  // Draw an index with probability proportional to weights[i].
  template <typename Range>
  std::size_t weighted(const Range& weights) {
    std::discrete_distribution<std::size_t> d(std::begin(weights), std::end(weights));
    return d(engine_);
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ctxprobe
