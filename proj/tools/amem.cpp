#include "amem/cli.hpp"

int main(int argc, char** argv) { return amem::cli::run(argc, argv); }
