#include "itstyler/cli.hpp"

int main(int argc, char** argv) { return itstyler::cli::parse_and_dispatch(argc, argv); }
