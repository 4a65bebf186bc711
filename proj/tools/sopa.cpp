#include <iostream>
#include <string>
#include <vector>

#include "sopa/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return sopa::cli::run(args, std::cout, std::cerr);
}
