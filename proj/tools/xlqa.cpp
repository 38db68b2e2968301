#include <iostream>

#include "xlqa/cli.hpp"

int main(int argc, char** argv) { return xlqa::cli::run(argc, argv, std::cout, std::cerr); }
