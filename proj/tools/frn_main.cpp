#include "frn/cli.hpp"

int main(int argc, char** argv) { return frn::cli::dispatch(argc, argv); }
