#include "gatgpt/cli.hpp"

int main(int argc, char** argv) {
    return gatgpt::cli::run(argc, argv);
}
