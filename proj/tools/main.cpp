#include <iostream>

#include "tdq/cli.hpp"

int main(int argc, char** argv) { return tdq::cli_main(argc, argv, std::cout, std::cerr); }
