#include "gemmbench/cli.hpp"

int main(int argc, char** argv) { return gemmbench::cli_main(argc, argv); }
