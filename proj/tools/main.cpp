#include "tiervc/cli.hpp"

int main(int argc, char** argv) { return tiervc::run_cli(argc, argv); }
