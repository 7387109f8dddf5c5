#include <iostream>

#include "mlnc/cli.hpp"

int main(int argc, char** argv) { return mlnc::run_cli(argc, argv, std::cout, std::cerr); }
