#include <iostream>

#include "toolstar/cli.hpp"

int main(int argc, char** argv) {
  return toolstar::run_cli(argc, argv, std::cout, std::cerr);
}
