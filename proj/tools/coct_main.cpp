#include <unistd.h>

#include <iostream>
#include <string>
#include <vector>

#include "coct/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  coct::cli::Terminal term{std::cin, std::cout, std::cerr, ::isatty(STDOUT_FILENO) != 0};
  return coct::cli::run_cli(args, term);
}
