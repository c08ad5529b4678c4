#include <iostream>

#include "dacrs/cli.hpp"

int main(int argc, char** argv) { return dacrs::cli_dispatch(argc, argv, std::cout, std::cerr); }
