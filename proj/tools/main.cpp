#include <iostream>
#include <vector>

#include "pmfs/cli.hpp"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv + 1, argv + argc);
    return pmfs::cli::run(args, std::cout, std::cerr);
}
