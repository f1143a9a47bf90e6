#include <iostream>

#include "stlmon/cli.hpp"

int main(int argc, char** argv) { return stlmon::run_cli(argc, argv, std::cin, std::cout, std::cerr); }
