#include "commands.hpp"

int main(int argc, char** argv) {
  return polybert::cli::dispatch(argc, argv);
}
