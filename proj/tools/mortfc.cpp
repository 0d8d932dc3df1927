#include <iostream>

#include "mortfc/cli.hpp"

int main(int argc, char** argv) { return mortfc::cli::run(argc, argv, std::cout, std::cerr); }
