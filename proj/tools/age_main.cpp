#include <iostream>

#include "age/app/commands.hpp"

int main(int argc, char** argv) { return age::app::run_cli(argc, argv, std::cout, std::cerr); }
