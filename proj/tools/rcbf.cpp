#include <iostream>

#include "rcbf/cli.hpp"

int main(int argc, char** argv) { return rcbf::cli::run(argc, argv, std::cout, std::cerr); }
