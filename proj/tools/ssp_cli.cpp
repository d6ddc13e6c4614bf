#include <iostream>

#include "ssp_cli_app.hpp"

int main(int argc, char** argv) { return ssp::cli::run(argc, argv, std::cout, std::cerr); }
