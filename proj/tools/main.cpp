#include "fqeval/cli.hpp"

int main(int argc, char** argv) { return fqeval::cli::run(argc, argv); }
