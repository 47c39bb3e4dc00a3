#include "vrbci/cli.hpp"

int main(int argc, char** argv) { return vrbci::cli_main(argc, argv); }
