#include "dpts/cli.hpp"

int main(int argc, char** argv) { return dpts::cli::run(argc, argv); }
