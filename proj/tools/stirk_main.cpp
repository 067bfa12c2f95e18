#include "stirk/cli.hpp"

int main(int argc, char** argv) { return stirk::run_cli(argc, argv); }
