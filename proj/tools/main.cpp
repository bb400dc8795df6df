#include <iostream>

#include "cgbn/cli.hpp"

int main(int argc, char** argv) { return cgbn::run_cli(argc, argv, std::cout, std::cerr); }
