#include <string>
#include <vector>

#include "bgaug/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return bgaug::cli_main(args);
}
