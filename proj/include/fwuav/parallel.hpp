#pragma once

#include <cstdint>
#include <functional>
#include <random>

namespace fwuav {

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Work is split by index, so
/// results written to per-index slots do not depend on the worker count.
/// The first exception thrown by any task is rethrown after all workers finish.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

/// SplitMix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x);

/// Independent generator for (seed, stream); the same pair always yields the same sequence.
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream);

}  // namespace fwuav
