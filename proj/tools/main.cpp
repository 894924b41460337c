#include "cli.hpp"

int main(int argc, char** argv) { return poctrl::cli::run_cli(argc, argv); }
