#include "rffkit/cli.hpp"

int main(int argc, char** argv) { return rffkit::run_cli(argc, argv); }
