#include "mottsf/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return mottsf::cli::run(argc, argv, std::cout, std::cerr); }
