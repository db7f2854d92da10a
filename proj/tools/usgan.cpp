#include <iostream>

#include "usgan/cli.hpp"

int main(int argc, char** argv) { return usgan::cli::run(argc, argv, std::cout, std::cerr); }
