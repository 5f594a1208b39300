#include <iostream>

#include "cbamc/cli/app.hpp"

int main(int argc, char** argv) { return cbamc::cli::run_cli(argc, argv, std::cout, std::cerr); }
