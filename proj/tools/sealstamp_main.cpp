#include <iostream>

#include "sealstamp/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sealstamp::run_cli(args, std::cin, std::cout, std::cerr, sealstamp::process_env());
}
