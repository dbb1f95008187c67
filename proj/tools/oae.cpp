#include <iostream>
#include <string>
#include <vector>

#include "oae/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return oae::cli::dispatch(args, std::cout, std::cerr);
}
