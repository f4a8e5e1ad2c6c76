#include <iostream>

#include "stdde/cli.hpp"

int main(int argc, char** argv) { return stdde::cli_main(argc, argv, std::cout, std::cerr); }
