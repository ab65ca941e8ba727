#include "iris/cli.hpp"

int main(int argc, char** argv) { return iris::cli_run(argc, argv); }
