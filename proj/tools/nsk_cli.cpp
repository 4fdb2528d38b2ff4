// Placeholder CLI entry point; subcommands land with the pipeline module.
#include <nsk/core.hpp>

#include <cstdio>

int main() {
  std::printf("nsk %s\n", nsk::kVersion);
  return 0;
}
