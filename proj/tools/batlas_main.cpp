#include <iostream>

#include "batlas/cli.hpp"

int main(int argc, char** argv) { return batlas::run_cli(argc, argv, std::cout, std::cerr); }
