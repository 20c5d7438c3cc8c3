#include <iostream>

#include "rsdiff/cli.hpp"

int main(int argc, char** argv) { return rsdiff::cli_main(argc, argv, std::cout, std::cerr); }
