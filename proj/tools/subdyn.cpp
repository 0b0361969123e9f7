#include <iostream>

#include "cli/cli.hpp"

int main(int argc, char** argv) { return subdyn::cli::main_entry(argc, argv, std::cout, std::cerr); }
