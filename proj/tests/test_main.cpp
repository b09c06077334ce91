#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "gmic/runtime.hpp"

int main(int argc, char** argv) {
  gmic::runtime_init(0);
  doctest::Context ctx;
  ctx.applyCommandLine(argc, argv);
  return ctx.run();
}
