#include <iostream>

#include "lgc3d/cli.hpp"

int main(int argc, char** argv) { return lgc3d::cli_main(argc, argv, std::cout, std::cerr); }
