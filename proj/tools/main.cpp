#include "cli.hpp"

int main(int argc, char** argv) { return caafp::cli::run_cli(argc, argv); }
