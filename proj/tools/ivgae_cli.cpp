#include <iostream>
#include <string>
#include <vector>

#include "ivgae/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ivgae::run_cli(args, std::cout, std::cerr);
}
