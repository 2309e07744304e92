#include "bocpd/cli.hpp"

int main(int argc, char** argv) { return bocpd::cli_main(argc, argv); }
