#pragma once

#include <cstddef>
#include <functional>

namespace ctxprobe {

// Runs task(i) for i in [0, n) on up to `workers` threads. Tasks must write
// only to their own output slot. The first exception thrown by any task is
// rethrown after all threads finish.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& task);

}  // namespace ctxprobe
