#include <iostream>

#include "h2coord/cli.hpp"

int main(int argc, char** argv) { return h2coord::cli::run(argc, argv, std::cout, std::cerr); }
