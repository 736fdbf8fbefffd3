#include <iostream>

#include "ctxprobe/cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ctxprobe::cli::run(args, std::cout, std::cerr);
}
