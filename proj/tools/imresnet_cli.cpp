#include <iostream>

#include "imresnet/cli.hpp"

int main(int argc, char** argv) { return imresnet::cli::run(argc, argv, std::cout, std::cerr); }
