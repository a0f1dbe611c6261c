#include <iostream>

#include "effloc/cli.hpp"

int main(int argc, char** argv) {
  return effloc::run_cli(argc, argv, std::cout, std::cerr);
}
