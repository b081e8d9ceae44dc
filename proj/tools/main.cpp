#include <iostream>

#include "rrs/cli/commands.hpp"

int main(int argc, char** argv) { return rrs::cli::run(argc, argv, std::cout, std::cerr); }
