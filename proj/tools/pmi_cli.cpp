#include <iostream>
#include <string>
#include <vector>

#include "pmi/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return pmi::cli::run(std::move(args), std::cin, std::cout, std::cerr);
}
