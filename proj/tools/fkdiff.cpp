#include <iostream>

#include "fkdiff/cli.hpp"

int main(int argc, char** argv) { return fkdiff::cli::run(argc, argv, std::cout, std::cerr); }
