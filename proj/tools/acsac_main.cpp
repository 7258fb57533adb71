#include "acsac/cli.hpp"

int main(int argc, char** argv) { return acsac::cli_dispatch(argc, argv); }
