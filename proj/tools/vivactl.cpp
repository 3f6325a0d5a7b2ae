#include <iostream>
#include <string>
#include <vector>

#include "viva/cli/commands.h"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return viva::cli::main_entry(args, std::cin, std::cout, std::cerr);
}
