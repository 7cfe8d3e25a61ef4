#include <iostream>

#include "ammrl/cli.hpp"

int main(int argc, char** argv) { return ammrl::cli::run(argc, argv, std::cout, std::cerr); }
