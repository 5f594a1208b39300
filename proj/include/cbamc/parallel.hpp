#pragma once

#include <cstddef>
#include <functional>

namespace cbamc {

/// Worker count from CBAMC_WORKERS, else std::thread::hardware_concurrency().
unsigned worker_count();

/// Runs fn(i) for i in [0, n) on up to `workers` threads using a static
/// contiguous partition. Results must not depend on the partition.
/// The first exception thrown by any worker is rethrown.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

}  // namespace cbamc
