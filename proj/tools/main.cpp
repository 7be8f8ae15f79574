#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) { return paon::cli::run_cli(argc, argv, std::cout, std::cerr); }
