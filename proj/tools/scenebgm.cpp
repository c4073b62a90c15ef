#include <iostream>

#include "bgm/cli.hpp"

int main(int argc, char** argv) {
    bgm::cli::install_signal_handlers();
    return bgm::cli::main(argc, argv, std::cout, std::cerr);
}
