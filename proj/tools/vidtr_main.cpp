#include <iostream>
#include <string>
#include <vector>

#include "vidtr/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return vidtr::run_cli(args, std::cout, std::cerr);
}
