#include <iostream>
#include <string>
#include <vector>

#include "ucm/cli/dispatch.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ucm::cli::run_cli(std::move(args), std::cin, std::cout, std::cerr);
}
