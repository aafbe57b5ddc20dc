#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "scorelab/acceptance.hpp"

int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  return scorelab::acceptance::run_suite(std::cout, only) ? 0 : 1;
}
