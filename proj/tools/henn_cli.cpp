#include <iostream>

#include "henn/cli.hpp"

int main(int argc, char** argv) { return henn::cli::run(argc, argv, std::cout, std::cerr); }
