#include "lradi/cli.hpp"

int main(int argc, char** argv) { return lradi::cli::main_entry(argc, argv); }
