#include <string>
#include <vector>

#include "calport/cli_io.hpp"

int main(int argc, char** argv) {
  return calport::RunCommand(std::vector<std::string>(argv + 1, argv + argc));
}
