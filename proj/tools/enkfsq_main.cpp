#include <iostream>

#include "enkfsq/cli.hpp"

int main(int argc, char** argv) { return enkfsq::cli::dispatch(argc, argv, std::cout, std::cerr); }
