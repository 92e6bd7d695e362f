#include <iostream>

#include "cds/cli.hpp"

int main(int argc, char** argv) {
  return cds::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
