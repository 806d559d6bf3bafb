#include <iostream>
#include <string>
#include <vector>

#include "flair/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return flair::cli::run(args, std::cout, std::cerr);
}
