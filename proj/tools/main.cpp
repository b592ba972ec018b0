#include <vector>

#include "netsheaf/cli.hpp"

int main(int argc, char** argv) {
  return netsheaf::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
