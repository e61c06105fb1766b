#include <string>
#include <vector>

#include "kinetrack/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return kinetrack::cli_run(args);
}
