#include "cytocount/cli.hpp"

int main(int argc, char** argv) { return cyto::cli_main(argc, argv); }
