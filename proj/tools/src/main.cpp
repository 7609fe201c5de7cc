#include <iostream>

#include "glandsynth/cli.hpp"

int main(int argc, char** argv) {
    return glandsynth::run_cli(argc, argv, std::cout, std::cerr);
}
