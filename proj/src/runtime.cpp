#include "gmic/runtime.hpp"

#include <cblas.h>

#include "gmic/threading.hpp"

namespace gmic {

void runtime_init(int threads) {
  openblas_set_num_threads(1);
  set_max_threads(threads);
}

}  // namespace gmic
