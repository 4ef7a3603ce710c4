#include "cli.hpp"

int main(int argc, char** argv) { return objcomp::cli::run(argc, argv); }
