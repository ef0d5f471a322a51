#include <cstdio>

#include "leap/model.hpp"
#include "leap/terrain.hpp"

int main(int argc, char** argv) {
  (void)argc;
  (void)argv;
  std::fprintf(stderr, "leap: command line not wired up yet\n");
  return 2;
}
