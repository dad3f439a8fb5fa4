#include <iostream>

#include "nhtrack/cli.hpp"

int main(int argc, char** argv) { return nhtrack::cli::run(argc, argv, std::cout, std::cerr); }
