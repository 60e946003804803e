#include "flan/cli.hpp"

int main(int argc, char** argv) { return flan::run_cli(argc, argv); }
