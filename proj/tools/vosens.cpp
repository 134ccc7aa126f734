#include <string>
#include <vector>

#include "vosens/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return vosens::run_command(args);
}
