#include <iostream>

#include "meshsim/cli.hpp"

int main(int argc, char** argv) { return meshsim::cli::run_main(argc, argv, std::cout, std::cerr); }
