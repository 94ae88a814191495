#include "cli.hpp"

int main(int argc, char** argv) {
    return streamdiar::cli::run(argc, argv);
}
