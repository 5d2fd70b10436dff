#include <string>
#include <vector>

#include "dssbd/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dssbd::run_cli(args);
}
