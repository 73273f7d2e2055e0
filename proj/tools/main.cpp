#include <string>
#include <vector>

#include "vidcap/cli.hpp"

int main(int argc, char** argv) {
  return vidcap::run_cli(std::vector<std::string>(argv, argv + argc));
}
