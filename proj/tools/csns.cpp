#include "csns/cli.hpp"

int main(int argc, char** argv) { return csns::cli_main(argc, argv); }
