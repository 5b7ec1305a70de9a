#include <iostream>

#include "icr/cli.hpp"

int main(int argc, char** argv) {
  return icr::cli::run(argc, argv, std::cout, std::cerr);
}
