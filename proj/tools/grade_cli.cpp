#include "grade/cli.hpp"

int main(int argc, char** argv) {
  return grade::cli::dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
