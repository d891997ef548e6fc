#include <string>
#include <vector>

#include "blueprint/cli.hpp"

int main(int argc, char** argv) {
  return blueprint::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
