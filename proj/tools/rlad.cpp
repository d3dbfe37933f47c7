#include <csignal>
#include <iostream>
#include <string>
#include <vector>

#include "rlad/cli.hpp"
#include "rlad/parallel.hpp"

namespace {
void on_sigint(int) { rlad::cancellation_flag().store(true); }
}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_sigint);
  std::vector<std::string> args(argv, argv + argc);
  return rlad::cli::run(args, std::cout, std::cerr);
}
