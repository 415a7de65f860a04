#include <iostream>

#include "qitsa/commands.hpp"

int main(int argc, char** argv) { return qitsa::cli::run_cli(argc, argv, std::cout, std::cerr); }
