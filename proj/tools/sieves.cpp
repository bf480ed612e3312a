#include <iostream>

#include "sieves/commands.hpp"

int main(int argc, char** argv) {
  const sieves::cli::Context ctx{std::cout, std::cerr, nullptr};
  return sieves::cli::run(argc, argv, ctx);
}
