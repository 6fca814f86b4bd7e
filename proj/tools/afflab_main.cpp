#include <iostream>

#include "afflab/cli.hpp"

int main(int argc, char** argv) {
  return afflab::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
