#include "sweep/cli.hpp"

int main(int argc, char** argv) { return sweep::cli::main(argc, argv); }
