#include <iostream>

#include "wsms/cli.hpp"

int main(int argc, char** argv) { return wsms::cli::main(argc, argv, std::cout, std::cerr); }
