#include "nsi/cli.hpp"

int main(int argc, char** argv) { return nsi::cli::run(argc, argv); }
