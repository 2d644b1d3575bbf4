#include <iostream>

#include "cocoslab/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cocoslab::run_cli(args, std::cout, std::cerr);
}
