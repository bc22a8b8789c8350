#include <nvctl/cli.hpp>

int main(int argc, char** argv) { return nvctl::cli::run_cli(argc, argv); }
