#include <iostream>

#include "biref/commands.hpp"

int main(int argc, char** argv) { return biref::run(argc, argv, std::cout, std::cerr); }
