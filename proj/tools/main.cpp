#include "rltopic/cli.hpp"

int main(int argc, char** argv) { return rltopic::cli::run(argc, argv); }
