#include "synthima/cli.hpp"

int main(int argc, char** argv) { return synthima::cli::run(argc, argv); }
