#include "cli.hpp"

int main(int argc, char** argv) {
  return trapscope::cli::run({argv + 1, argv + argc});
}
