#include "besplat/cli.hpp"

int main(int argc, char** argv) { return besplat::run_cli(argc, argv); }
