#include <iostream>

#include "cqc_cli/cli.hpp"

int main(int argc, char** argv) { return cqc::cli::run(argc, argv, std::cout, std::cerr); }
