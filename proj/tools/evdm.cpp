#include <iostream>

#include "evdm/cli.hpp"

int main(int argc, char** argv) { return evdm::run_cli(argc, argv, std::cout, std::cerr); }
