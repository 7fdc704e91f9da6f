#include <string>
#include <vector>

#include "vawi/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return vawi::cli::run(args);
}
