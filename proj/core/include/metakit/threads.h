#pragma once

#include <cstddef>
#include <functional>

namespace metakit {

// Parallelism cap: min(METAKIT_THREADS, hardware threads), at least 1.
std::size_t max_threads();

// Runs f(i) for i in [0, n). Spawns threads only when the cap and n allow;
// otherwise executes inline. f must be safe to call concurrently.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f);

}  // namespace metakit
