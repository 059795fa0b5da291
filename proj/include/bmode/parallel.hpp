#pragma once

#include <cstddef>
#include <functional>

namespace bmode {

// `requested` when positive, else BMODE_WORKERS from the environment, else
// the hardware concurrency.
int resolve_workers(int requested);

// Runs body(i) for i in [0, n) on up to `workers` threads. Each index runs
// exactly once; results must be written to per-index slots. The first
// exception is rethrown after all threads join.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body);

}  // namespace bmode
