#include <iostream>

#include "derivgen/commands.hpp"

int main(int argc, char** argv) {
  return derivgen::cli::run(argc, argv, std::cout, std::cerr);
}
