#include <iostream>

#include "kpp_cli.hpp"

int main(int argc, char** argv) { return kpp::cli::run(argc, argv, std::cout, std::cerr); }
