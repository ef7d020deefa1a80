#include "cli.hpp"

int main(int argc, char** argv) { return inconvad::cli::run(argc, argv); }
