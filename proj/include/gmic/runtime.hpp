#pragma once

namespace gmic {

// Pins BLAS to one thread (parallelism happens at the batch/item level, which
// keeps results independent of thread count) and caps the worker pool.
// threads = 0 means hardware concurrency.
void runtime_init(int threads = 0);

}  // namespace gmic
