#include <iostream>

#include "mvnsdde/cli.hpp"

int main(int argc, char** argv) { return mvnsdde::cli::run_cli(argc, argv, std::cout, std::cerr); }
