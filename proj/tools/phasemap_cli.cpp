#include "phasemap/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return phasemap::cli::run(argc, argv, std::cout, std::cerr); }
