#include <iostream>

#include "simmp/harness/cli.hpp"

int main(int argc, char** argv) { return simmp::run_cli(argc, argv, std::cout, std::cerr); }
