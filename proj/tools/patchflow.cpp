#include "patchflow/cli.hpp"

int main(int argc, char** argv) { return patchflow::cli::run(argc, argv); }
