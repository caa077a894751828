#include "ovgsr/cli.hpp"

int main(int argc, char** argv) { return ovgsr::run_cli(argc, argv); }
