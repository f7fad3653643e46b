#include <string>
#include <vector>

#include "transition_att/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return transition_att::cli::run(args);
}
