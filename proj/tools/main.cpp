#include <iostream>

#include "dlinalg/cli.hpp"

int main(int argc, char** argv) {
  return dla::run_cli(argc, argv, std::cout, std::cerr);
}
