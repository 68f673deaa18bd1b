#include "hmap/cli.hpp"

int main(int argc, char** argv) { return hmap::cli::run(argc, argv); }
