#include <iostream>

#include "tabseq/cli.h"

int main(int argc, char** argv) { return tabseq::cli::run(argc, argv, std::cout, std::cerr); }
