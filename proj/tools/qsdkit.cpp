#include <iostream>
#include <string>
#include <vector>

#include "qsdkit_cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return qsdkit::cli::cli_main(args, std::cout, std::cerr);
}
