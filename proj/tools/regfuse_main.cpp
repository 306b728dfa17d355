#include "regfuse/cli.hpp"

int main(int argc, char **argv) { return regfuse::cli::run(argc, argv); }
