#include "qeclab/cli.hpp"

int main(int argc, char** argv) { return qeclab::cli::run(argc, argv); }
