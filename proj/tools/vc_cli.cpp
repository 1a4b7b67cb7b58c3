#include "lvcvc/cli.hpp"

int main(int argc, char** argv) { return lvcvc::cli::run_cli(argc, argv); }
