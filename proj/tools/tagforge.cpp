#include "tagforge/cli.hpp"

int main(int argc, char** argv) { return tagforge::cli::run(argc, argv); }
