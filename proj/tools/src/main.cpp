#include <iostream>

#include "msica_cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return msica::cli::run(args, std::cout, std::cerr);
}
